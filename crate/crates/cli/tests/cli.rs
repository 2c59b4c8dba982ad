//! End-to-end behaviour of the `tatkit` binary: exit codes, provenance and
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tatkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tatkit")).args(args).env("RUST_LOG", "info").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small 2D experiment touching every stage that runs in well under a second.
fn small_config(extra_stages: &str) -> String {
    format!(
        r#"{{
  "name": "small",
  "seed": 3,
  "stages": [
    {{"stage": "phantom", "grid": {{"dim": 2, "n": 33, "lo": -1, "hi": 1}},
      "phantom": {{"primitives": [{{"type": "gaussian", "center": [0.1, 0.0], "width": 0.15, "amplitude": 1}}]}},
      "output": "truth.tfld"}},
    {{"stage": "simulate", "input": "truth.tfld", "model": "wave", "t_final": 8.5, "noise_level": 0.05,
      "surface": {{"type": "cube", "lo": [-1, -1], "hi": [1, 1], "n": [33, 33]}}, "output": "data/p.tsin"}},
    {{"stage": "reconstruct", "input": "data/p.tsin", "method": "series",
      "grid": {{"dim": 2, "n": 33, "lo": -1, "hi": 1}}, "output": "series.tfld"}},
    {{"stage": "focus", "input": "truth.tfld", "basis": {{"kind": "n_shaped_shell", "n_radii": 60}},
      "noise_level": 0.1, "output": "focused.timp"}},
    {{"stage": "metrics", "input": "series.tfld", "truth": "truth.tfld", "output": "metrics.json"}}{extra_stages}
  ]
}}"#
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn run_in(dir: &Path, sub: &str, cfg: &Path, more: &[&str]) -> Output {
    let mut args = vec![sub, cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(more);
    tatkit(&args)
}

/// JSON header of a container file (after the 8-byte magic).
fn header(path: &Path) -> Value {
    let bytes = std::fs::read(path).unwrap();
    let end = bytes.iter().position(|&b| b == b'\n').unwrap();
    serde_json::from_slice(&bytes[8..end]).unwrap()
}

#[test]
fn pipeline_writes_provenance_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(""));
    let out = run_in(dir.path(), "pipeline", &cfg, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let listed: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(listed.len(), 5);

    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let prov = &m["provenance"];
    let hash = prov["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(prov["seed"], 3);
    assert_eq!(prov["toolkit_version"], env!("CARGO_PKG_VERSION"));
    for key in ["relative_l2", "linf", "psnr_db"] {
        assert!(m[key].as_f64().is_some(), "{key}");
    }
    assert!(m["relative_l2"].as_f64().unwrap() < 0.1);
    for f in ["truth.tfld", "data/p.tsin", "series.tfld", "focused.timp"] {
        let h = header(&dir.path().join(f));
        assert_eq!(h["provenance"]["config_hash"], hash, "{f}: {h}");
        assert_eq!(h["provenance"]["seed"], 3, "{f}");
    }
}

#[test]
fn single_stage_rerun_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(""));
    assert!(run_in(dir.path(), "pipeline", &cfg, &[]).status.success());
    let first = std::fs::read(dir.path().join("focused.timp")).unwrap();
    let noisy = std::fs::read(dir.path().join("data/p.tsin")).unwrap();
    std::fs::remove_file(dir.path().join("focused.timp")).unwrap();
    let out = run_in(dir.path(), "focus", &cfg, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::str::from_utf8(&out.stdout).unwrap().lines().count(), 1);
    assert_eq!(first, std::fs::read(dir.path().join("focused.timp")).unwrap());
    assert!(run_in(dir.path(), "simulate", &cfg, &[]).status.success());
    assert_eq!(noisy, std::fs::read(dir.path().join("data/p.tsin")).unwrap());
}

#[test]
fn seed_changes_noisy_outputs_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = small_config("");
    let ca = write_config(a.path(), &text);
    let cb = write_config(b.path(), &text);
    assert!(run_in(a.path(), "pipeline", &ca, &[]).status.success());
    assert!(run_in(b.path(), "pipeline", &cb, &["--seed", "4"]).status.success());
    let data = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_ne!(data(a.path(), "data/p.tsin"), data(b.path(), "data/p.tsin"));
    assert_eq!(header(&b.path().join("truth.tfld"))["provenance"]["seed"], 4);
}

#[test]
fn unknown_method_is_a_schema_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config("").replace(r#""method": "series""#, r#""method": "sorcery""#));
    let out = run_in(dir.path(), "pipeline", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("stages[2].method") && err.contains("sorcery"), "{err}");
    // nothing runs before the whole document validates
    assert!(!dir.path().join("truth.tfld").exists());
}

#[test]
fn malformed_json_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{ not json");
    assert_eq!(run_in(dir.path(), "pipeline", &cfg, &[]).status.code(), Some(2));
    assert_eq!(tatkit(&["pipeline"]).status.code(), Some(2));
    assert_eq!(tatkit(&["transmogrify", "x.json"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error_naming_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(""));
    let out = run_in(dir.path(), "reconstruct", &cfg, &[]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr(&out);
    assert!(err.contains("stage 2 (reconstruct)") && err.contains("p.tsin"), "{err}");

    let out = tatkit(&["pipeline", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn corrupt_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(""));
    std::fs::write(dir.path().join("truth.tfld"), b"TATFLD01{oops").unwrap();
    let out = run_in(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // a time step far beyond the stability bound
    let text = small_config("").replace(r#""t_final": 8.5,"#, r#""t_final": 8.5, "dt": 0.5,"#);
    let cfg = write_config(dir.path(), &text);
    let out = run_in(dir.path(), "pipeline", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("stage 1 (simulate)") && err.contains("CFL"), "{err}");

    // an error bound the reconstruction cannot meet
    let dir = tempfile::tempdir().unwrap();
    let text = small_config("").replace(r#""output": "metrics.json"}"#, r#""output": "metrics.json", "max_relative_l2": 1e-9}"#);
    let cfg = write_config(dir.path(), &text);
    let out = run_in(dir.path(), "pipeline", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("stage 4 (metrics)"));
    assert!(dir.path().join("metrics.json").exists());
}

#[test]
fn aet_beta_override_enters_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let aet = r#",
    {"stage": "phantom", "grid": {"dim": 2, "n": 17, "lo": -1, "hi": 1},
      "phantom": {"background": 1, "primitives": [{"type": "gaussian", "center": [0.1, 0.0], "width": 0.2, "amplitude": 1}]},
      "output": "sigma-truth.tfld"},
    {"stage": "aet", "input": "sigma-truth.tfld", "maps": [[0, 0], [1, 1]], "max_iter": 5,
      "patterns": [{"boundary": "dirichlet", "direction": [1, 0]}, {"boundary": "neumann", "direction": [0, 1]}],
      "basis": {"kind": "n_shaped_shell", "n_radii": 40}, "output": "sigma.tfld", "report_output": "report.json"}"#;
    let cfg = write_config(dir.path(), &small_config(aet));
    assert!(run_in(dir.path(), "phantom", &cfg, &[]).status.success());
    let out = run_in(dir.path(), "aet", &cfg, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let h0 = header(&dir.path().join("sigma.tfld"))["provenance"]["config_hash"].clone();
    let out = run_in(dir.path(), "aet", &cfg, &["--beta", "0.01"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let h1 = header(&dir.path().join("sigma.tfld"))["provenance"]["config_hash"].clone();
    assert_ne!(h0, h1);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["provenance"]["config_hash"], h1);
    let obj = rep["objective"].as_array().unwrap();
    assert!(obj.windows(2).all(|w| w[1].as_f64() <= w[0].as_f64()));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = small_config("");
    let ca = write_config(a.path(), &text);
    let cb = write_config(b.path(), &text);
    assert!(run_in(a.path(), "pipeline", &ca, &["--threads", "1"]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_tatkit"))
        .args(["pipeline", cb.to_str().unwrap(), "--out-dir", b.path().to_str().unwrap()])
        .env("TATKIT_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["truth.tfld", "data/p.tsin", "series.tfld", "focused.timp", "metrics.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["phantom", "simulate", "reconstruct", "focus", "aet", "metrics", "pipeline"] {
        let out = tatkit(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--threads") && text.contains("--out-dir"), "{sub}: {text}");
    }
    assert!(String::from_utf8_lossy(&tatkit(&["aet", "--help"]).stdout).contains("--beta"));
}
