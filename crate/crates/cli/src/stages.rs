//! Stage execution. Each stage reads its inputs from disk and writes its
//! artifacts with a provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use tatkit::aet::{interior_functional, reconstruct_sigma, solve_conductivity, AetOptions, CurrentPattern, ObservedMap};
use tatkit::fbp::{reconstruct_fbp_with, FbpOptions};
use tatkit::focusing::{
    focus_eigenbasis, read_interior_map, synthesize_modulated_measurements, synthetic_focus, write_interior_map,
    write_measurements, FocusingBasis, InteriorMap, BasisKind, INTERIOR_MAGIC,
};
use tatkit::forward::{max_stable_dt, solve_wave_forward_with, spherical_mean_transform, ForwardOptions};
use tatkit::io::{read_field, read_sinogram, write_field_with, write_sinogram_with, Provenance, FIELD_MAGIC, SINOGRAM_MAGIC};
use tatkit::metrics::{compare, compare_values, Metrics};
use tatkit::noise::add_relative_noise;
use tatkit::series::{coefficients_from_gk, project_boundary_data, synthesize_field, write_coefficients, EigenBasis};
use tatkit::timereversal::{neumann_refine, time_reverse, TimeReversalConfig};
use tatkit::{
    means_from_pressure, pressure_from_means, rasterize_phantom, GridSpec, ObservationSurface, ScalarField, Sinogram,
    SinogramKind,
};

use crate::config::{
    AetStage, BasisConfig, BoundaryKind, ExperimentConfig, FocusStage, MethodName, MetricsStage, PatternConfig,
    PhantomStage, ReconstructStage, SimModel, SimulateStage, SpeedConfig, Stage, StageKind,
};
use crate::error::CliError;

/// Tag given to plain field inputs of the focus stage.
const DEFAULT_TAG: &str = "sigma_grad_u1_dot_grad_u2";

struct Ctx<'a> {
    label: String,
    base: &'a Path,
    prov: Provenance,
    /// Per-stage seed drawn from the experiment generator.
    seed: u64,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn input(&self, p: &Path) -> Result<PathBuf, CliError> {
        let full = self.path(p);
        if !full.is_file() {
            return Err(CliError::Io { stage: self.label.clone(), path: full, message: "input file not found".into() });
        }
        Ok(full)
    }

    /// Resolve an output path and create its directory.
    fn output(&mut self, p: &Path) -> Result<PathBuf, CliError> {
        let full = self.path(p);
        if let Some(dir) = full.parent() {
            fs::create_dir_all(dir).map_err(|e| self.io(dir, e))?;
        }
        self.written.push(full.clone());
        Ok(full)
    }

    fn io(&self, path: &Path, e: std::io::Error) -> CliError {
        CliError::Io { stage: self.label.clone(), path: path.to_path_buf(), message: e.to_string() }
    }

    fn core(&self, path: Option<&Path>) -> impl Fn(tatkit::Error) -> CliError + '_ {
        let path = path.map(Path::to_path_buf);
        move |e| CliError::from_core(&self.label, path.as_deref(), e)
    }

    fn fail(&self, message: impl Into<String>) -> CliError {
        CliError::Numerical { stage: self.label.clone(), message: message.into() }
    }

    fn write_json(&mut self, p: &Path, v: &serde_json::Value) -> Result<(), CliError> {
        let path = self.output(p)?;
        let text = serde_json::to_string_pretty(v).expect("json values serialize");
        fs::write(&path, text + "\n").map_err(|e| self.io(&path, e))
    }
}

/// Run the stages of `cfg`, or only those of kind `only`. Every stage draws
/// its seed from one generator whatever is selected, so a single stage
/// rerun reproduces its pipeline output. Returns the files written.
pub fn run(cfg: &ExperimentConfig, only: Option<StageKind>) -> Result<Vec<PathBuf>, CliError> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prov = Provenance {
        config_hash: cfg.hash.clone(),
        toolkit_version: tatkit::VERSION.to_string(),
        seed: Some(cfg.seed),
    };
    let mut written = Vec::new();
    for (i, stage) in cfg.stages.iter().enumerate() {
        let seed = master.next_u64();
        if only.is_some_and(|k| k != stage.kind()) {
            continue;
        }
        let mut ctx = Ctx {
            label: format!("stage {i} ({})", stage.kind()),
            base: &cfg.output_dir,
            prov: prov.clone(),
            seed,
            written: Vec::new(),
        };
        info!("{}: running", ctx.label);
        match stage {
            Stage::Phantom(s) => phantom(&mut ctx, s)?,
            Stage::Simulate(s) => simulate(&mut ctx, s)?,
            Stage::Reconstruct(s) => reconstruct(&mut ctx, s)?,
            Stage::Focus(s) => focus(&mut ctx, s)?,
            Stage::Aet(s) => aet(&mut ctx, s)?,
            Stage::Metrics(s) => metrics(&mut ctx, s)?,
        }
        for p in &ctx.written {
            info!("{}: wrote {}", ctx.label, p.display());
        }
        written.append(&mut ctx.written);
    }
    Ok(written)
}

fn grid_of(ctx: &Ctx, g: &crate::config::GridConfig) -> Result<GridSpec, CliError> {
    g.build().map_err(ctx.core(None))
}

fn speed_field(ctx: &Ctx, s: &SpeedConfig, grid: &GridSpec) -> Result<ScalarField, CliError> {
    match s {
        SpeedConfig::Constant(c) => Ok(ScalarField::constant(grid.clone(), *c, "c")),
        SpeedConfig::Phantom(p) => rasterize_phantom(p, grid).map_err(ctx.core(None)),
        SpeedConfig::File(p) => {
            let path = ctx.input(p)?;
            let c = read_field(&path).map_err(ctx.core(Some(&path)))?;
            if !c.grid.same_lattice(grid) {
                return Err(ctx.fail(format!("sound speed {} is not on the working grid", path.display())));
            }
            Ok(c)
        }
    }
}

fn magic(ctx: &Ctx, path: &Path) -> Result<[u8; 8], CliError> {
    use std::io::Read;
    let mut m = [0u8; 8];
    fs::File::open(path).and_then(|mut f| f.read_exact(&mut m)).map_err(|e| ctx.io(path, e))?;
    Ok(m)
}

/// A field file or an interior map; the tag is `None` for plain fields.
fn read_any_field(ctx: &Ctx, path: &Path) -> Result<(ScalarField, Option<String>), CliError> {
    let m = magic(ctx, path)?;
    if &m == INTERIOR_MAGIC {
        let w = read_interior_map(path).map_err(ctx.core(Some(path)))?;
        Ok((w.field, Some(w.tag)))
    } else {
        Ok((read_field(path).map_err(ctx.core(Some(path)))?, None))
    }
}

fn phantom(ctx: &mut Ctx, s: &PhantomStage) -> Result<(), CliError> {
    let grid = grid_of(ctx, &s.grid)?;
    let f = rasterize_phantom(&s.phantom, &grid).map_err(ctx.core(None))?;
    let out = ctx.output(&s.output)?;
    write_field_with(&f, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))
}

fn simulate(ctx: &mut Ctx, s: &SimulateStage) -> Result<(), CliError> {
    let input = ctx.input(&s.input)?;
    let f = read_field(&input).map_err(ctx.core(Some(&input)))?;
    let surface = ObservationSurface::from_spec(s.surface.clone()).map_err(ctx.core(None))?;
    let c = speed_field(ctx, &s.sound_speed, &f.grid)?;
    let c_max = c.max_value();
    let dt = s.dt.unwrap_or_else(|| max_stable_dt(&f.grid, c_max));
    let mut g = match s.model {
        SimModel::Wave => {
            let mut opts = ForwardOptions::default();
            if let Some(n) = s.sponge_cells {
                opts.sponge_cells = n;
            }
            solve_wave_forward_with(&f, &c, &surface, s.t_final, dt, &opts).map_err(ctx.core(None))?.sinogram
        }
        SimModel::SphericalIntegral | SimModel::Kirchhoff => {
            // same sample count as the wave solver
            let n_times = (s.t_final / dt - 1e-9).ceil() as usize + 1;
            let g = spherical_mean_transform(&f, &surface, c_max, dt, n_times).map_err(ctx.core(None))?;
            if s.model == SimModel::Kirchhoff {
                pressure_from_means(&g, c_max).map_err(ctx.core(None))?
            } else {
                g
            }
        }
    };
    add_relative_noise(&mut g.values, s.noise_level, ctx.seed).map_err(ctx.core(None))?;
    let out = ctx.output(&s.output)?;
    write_sinogram_with(&g, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))
}

fn constant_speed(ctx: &Ctx, g: &Sinogram, method: &str) -> Result<f64, CliError> {
    g.sound_speed.ok_or_else(|| ctx.fail(format!("{method} needs data recorded at a constant sound speed")))
}

fn reconstruct(ctx: &mut Ctx, s: &ReconstructStage) -> Result<(), CliError> {
    let input = ctx.input(&s.input)?;
    let g = read_sinogram(&input).map_err(ctx.core(Some(&input)))?;
    let grid = grid_of(ctx, &s.grid)?;
    let rec = match s.method {
        MethodName::Fbp => {
            let data = if g.kind == SinogramKind::Pressure {
                let c = constant_speed(ctx, &g, "backprojection")?;
                means_from_pressure(&g, c).map_err(ctx.core(None))?
            } else {
                g
            };
            let opts = FbpOptions { range: s.range.unwrap_or_default() };
            let variant = s.variant.expect("validated");
            reconstruct_fbp_with(&data, variant, &grid, &opts).map_err(ctx.core(None))?
        }
        MethodName::Series => {
            let c = constant_speed(ctx, &g, "the series method")?;
            let basis = EigenBasis::for_surface(&g.surface, c, s.lambda_max).map_err(ctx.core(None))?;
            let gk = project_boundary_data(&g, &basis).map_err(ctx.core(None))?;
            let coeffs = coefficients_from_gk(&gk, &basis, s.formula.unwrap_or_default()).map_err(ctx.core(None))?;
            if let Some(p) = &s.coefficients_output {
                let out = ctx.output(p)?;
                write_coefficients(&coeffs, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))?;
            }
            synthesize_field(&coeffs, &grid).map_err(ctx.core(None))?
        }
        MethodName::TimeReversal => {
            let speed = match &s.sound_speed {
                Some(sp) => sp.clone(),
                None => SpeedConfig::Constant(constant_speed(ctx, &g, "time reversal without a speed model")?),
            };
            let c = speed_field(ctx, &speed, &grid)?;
            let cfg = TimeReversalConfig {
                t_final: s.t_final.unwrap_or_else(|| g.duration()),
                cutoff: s.cutoff.unwrap_or_default(),
                window: s.window,
                neumann_iterations: s.neumann_iterations.unwrap_or(0),
            };
            if cfg.neumann_iterations > 0 {
                let (f, rep) = neumann_refine(&g, &c, &cfg).map_err(ctx.core(None))?;
                info!("{}: neumann residuals {:?}, kept iterate {}", ctx.label, rep.residuals, rep.best);
                f
            } else {
                time_reverse(&g, &c, &cfg).map_err(ctx.core(None))?
            }
        }
    };
    let out = ctx.output(&s.output)?;
    write_field_with(&rec, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))
}

fn build_basis(ctx: &Ctx, b: &BasisConfig, grid: &GridSpec) -> Result<FocusingBasis, CliError> {
    let surface = match &b.surface {
        Some(spec) => ObservationSurface::from_spec(spec.clone()),
        None => ObservationSurface::cube_on_grid(grid),
    }
    .map_err(ctx.core(None))?;
    let (lo, hi) = grid.bounds();
    let r_max = b.r_max.unwrap_or_else(|| surface.max_distance_to_box(&lo, &hi) + 2.0 * grid.min_spacing());
    let dr = r_max / (b.n_radii - 1) as f64;
    let hw = match b.kind {
        BasisKind::NShapedShell => Some(b.half_width.unwrap_or(2.0 * dr)),
        BasisKind::DeltaShell => None,
    };
    FocusingBasis::uniform(b.kind, surface, r_max, b.n_radii, hw).map_err(ctx.core(None))
}

fn focus(ctx: &mut Ctx, s: &FocusStage) -> Result<(), CliError> {
    let input = ctx.input(&s.input)?;
    let (field, tag) = read_any_field(ctx, &input)?;
    let tag = s.tag.clone().or(tag).unwrap_or_else(|| DEFAULT_TAG.to_string());
    let w = InteriorMap::new(field, &tag).map_err(ctx.core(None))?;
    let grid = match &s.grid {
        Some(g) => grid_of(ctx, g)?,
        None => w.field.grid.clone(),
    };
    let basis = build_basis(ctx, &s.basis, &w.field.grid)?;
    let m = synthesize_modulated_measurements(&w, &basis, s.noise_level, ctx.seed).map_err(ctx.core(None))?;
    if let Some(p) = &s.measurements_output {
        let out = ctx.output(p)?;
        write_measurements(&m, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))?;
    }
    let rec = synthetic_focus(&m, &grid).map_err(ctx.core(None))?;
    let out = ctx.output(&s.output)?;
    write_interior_map(&rec, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))
}

/// Outward unit normal of the grid box at a boundary node; corner nodes get
/// the average of their sides, matching the half weights they carry.
fn box_normal(grid: &GridSpec, p: &[f64]) -> Vec<f64> {
    let (lo, hi) = grid.bounds();
    let tol = 1e-9 * grid.min_spacing();
    let d = grid.dim();
    let mut n = vec![0.0; d];
    let mut sides = 0;
    for a in 0..d {
        if (p[a] - hi[a]).abs() <= tol {
            n[a] = 1.0;
            sides += 1;
        } else if (p[a] - lo[a]).abs() <= tol {
            n[a] = -1.0;
            sides += 1;
        }
    }
    if sides > 1 {
        for v in &mut n {
            *v /= sides as f64;
        }
    }
    n
}

fn pattern(grid: &GridSpec, p: &PatternConfig) -> CurrentPattern {
    let d = &p.direction;
    match p.boundary {
        BoundaryKind::Dirichlet => CurrentPattern::dirichlet_from_fn(grid, |x| x[0] * d[0] + x[1] * d[1]),
        BoundaryKind::Neumann => CurrentPattern::neumann_from_fn(grid, |x| {
            let n = box_normal(grid, &x[..2]);
            n[0] * d[0] + n[1] * d[1]
        }),
    }
}

fn aet(ctx: &mut Ctx, s: &AetStage) -> Result<(), CliError> {
    let input = ctx.input(&s.input)?;
    let truth = read_field(&input).map_err(ctx.core(Some(&input)))?;
    let grid = truth.grid.clone();
    if grid.dim() != 2 {
        return Err(ctx.fail("the conductivity demo is 2D only"));
    }
    let patterns: Vec<CurrentPattern> = s.patterns.iter().map(|p| pattern(&grid, p)).collect();
    let u = patterns.iter().map(|p| solve_conductivity(&truth, p)).collect::<tatkit::Result<Vec<_>>>().map_err(ctx.core(None))?;
    let basis = build_basis(ctx, &s.basis, &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut maps = Vec::with_capacity(s.maps.len());
    for &[a, b] in &s.maps {
        let w = interior_functional(&truth, &u[a], &u[b]).map_err(ctx.core(None))?;
        let m = synthesize_modulated_measurements(&w, &basis, s.noise_level, rng.next_u64()).map_err(ctx.core(None))?;
        let map = synthetic_focus(&m, &grid).map_err(ctx.core(None))?;
        maps.push(ObservedMap { first: a, second: b, map });
    }
    let defaults = AetOptions::default();
    let opts = AetOptions {
        sigma0: s.sigma0.unwrap_or(defaults.sigma0),
        sigma_min: s.sigma_min.unwrap_or(defaults.sigma_min),
        sigma_max: s.sigma_max.unwrap_or(defaults.sigma_max),
        beta: s.beta,
        max_iter: s.max_iter.unwrap_or(defaults.max_iter),
        grad_tol: s.grad_tol.unwrap_or(defaults.grad_tol),
        band_limit: if s.band_limit { Some(focus_eigenbasis(&basis).map_err(ctx.core(None))?) } else { None },
        solve: defaults.solve,
    };
    let (sigma, rep) = reconstruct_sigma(&grid, patterns, maps, &opts).map_err(ctx.core(None))?;
    info!("{}: {} iterations, objective {:?} -> {:?}", ctx.label, rep.iterations, rep.objective.first(), rep.objective.last());
    let out = ctx.output(&s.output)?;
    write_field_with(&sigma, &out, Some(&ctx.prov)).map_err(ctx.core(Some(&out)))?;
    if let Some(p) = &s.report_output {
        let v = json!({
            "provenance": ctx.prov,
            "objective": rep.objective,
            "iterations": rep.iterations,
            "converged": rep.converged,
            "diagnostic": rep.diagnostic,
        });
        ctx.write_json(p, &v)?;
    }
    Ok(())
}

fn metrics(ctx: &mut Ctx, s: &MetricsStage) -> Result<(), CliError> {
    let input = ctx.input(&s.input)?;
    let truth = ctx.input(&s.truth)?;
    let (mi, mt) = (magic(ctx, &input)?, magic(ctx, &truth)?);
    let m: Metrics = if &mi == SINOGRAM_MAGIC && &mt == SINOGRAM_MAGIC {
        let a = read_sinogram(&input).map_err(ctx.core(Some(&input)))?;
        let b = read_sinogram(&truth).map_err(ctx.core(Some(&truth)))?;
        if a.n_detectors() != b.n_detectors() || a.n_times != b.n_times {
            return Err(ctx.fail("sinograms differ in shape"));
        }
        compare_values(&a.values, &b.values).map_err(ctx.core(None))?
    } else if [&mi, &mt].iter().all(|m| *m == FIELD_MAGIC || *m == INTERIOR_MAGIC) {
        let (a, _) = read_any_field(ctx, &input)?;
        let (b, _) = read_any_field(ctx, &truth)?;
        compare(&a, &b).map_err(ctx.core(None))?
    } else {
        return Err(ctx.fail("metrics compare two fields or two sinograms"));
    };
    info!("{}: relative L2 {:.4e}, Linf {:.4e}, PSNR {:.2} dB", ctx.label, m.relative_l2, m.linf, m.psnr_db);
    let v = json!({
        "provenance": ctx.prov,
        "input": s.input,
        "truth": s.truth,
        "relative_l2": m.relative_l2,
        "linf": m.linf,
        // null when the match is exact
        "psnr_db": m.psnr_db.is_finite().then_some(m.psnr_db),
    });
    ctx.write_json(&s.output, &v)?;
    if let Some(max) = s.max_relative_l2 {
        if m.relative_l2 > max {
            return Err(ctx.fail(format!("relative L2 error {:.4e} exceeds the bound {max:.4e}", m.relative_l2)));
        }
    }
    Ok(())
}
