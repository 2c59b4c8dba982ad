//! Experiment configuration: one JSON document holding a seed and an ordered
//! list of stages. Stages exchange data through files; relative paths are
//! resolved against the output directory.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use tatkit::fbp::{FbpVariant, RangePolicy};
use tatkit::focusing::BasisKind;
use tatkit::series::CoefficientFormula;
use tatkit::timereversal::Cutoff;
use tatkit::{GridSpec, ObservationSurface, PhantomDescriptor, SurfaceSpec};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
    /// Hex SHA-256 of the canonical (key-sorted) config after overrides,
    /// leaving out the output directory.
    pub hash: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    name: String,
    seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    stages: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Phantom,
    Simulate,
    Reconstruct,
    Focus,
    Aet,
    Metrics,
}

impl StageKind {
    const ALL: [StageKind; 6] =
        [StageKind::Phantom, StageKind::Simulate, StageKind::Reconstruct, StageKind::Focus, StageKind::Aet, StageKind::Metrics];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::Phantom => "phantom",
            StageKind::Simulate => "simulate",
            StageKind::Reconstruct => "reconstruct",
            StageKind::Focus => "focus",
            StageKind::Aet => "aet",
            StageKind::Metrics => "metrics",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum Stage {
    Phantom(PhantomStage),
    Simulate(SimulateStage),
    Reconstruct(ReconstructStage),
    Focus(FocusStage),
    Aet(AetStage),
    Metrics(MetricsStage),
}

impl Stage {
    pub fn kind(&self) -> StageKind {
        match self {
            Stage::Phantom(_) => StageKind::Phantom,
            Stage::Simulate(_) => StageKind::Simulate,
            Stage::Reconstruct(_) => StageKind::Reconstruct,
            Stage::Focus(_) => StageKind::Focus,
            Stage::Aet(_) => StageKind::Aet,
            Stage::Metrics(_) => StageKind::Metrics,
        }
    }
}

/// Cubic lattice `[lo, hi]^dim` with `n` nodes per axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

impl GridConfig {
    pub fn build(&self) -> tatkit::Result<GridSpec> {
        GridSpec::cube(self.dim, self.n, self.lo, self.hi)
    }
}

/// Sound speed: a constant, a phantom rasterized on the working grid, or a
/// field file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedConfig {
    Constant(f64),
    Phantom(PhantomDescriptor),
    File(PathBuf),
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig::Constant(1.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomStage {
    pub grid: GridConfig,
    pub phantom: PhantomDescriptor,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    /// Finite-difference wave solver; pressure traces.
    Wave,
    /// Direct spherical integrals of the source.
    SphericalIntegral,
    /// Pressure from spherical means by the constant-speed Kirchhoff relation.
    Kirchhoff,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateStage {
    pub input: PathBuf,
    pub surface: SurfaceSpec,
    pub model: SimModel,
    #[serde(default)]
    pub sound_speed: SpeedConfig,
    /// Defaults to the largest stable solver step.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_final: f64,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub sponge_cells: Option<usize>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Fbp,
    Series,
    TimeReversal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructStage {
    pub input: PathBuf,
    pub method: MethodName,
    pub grid: GridConfig,
    pub output: PathBuf,
    // fbp
    #[serde(default)]
    pub variant: Option<FbpVariant>,
    #[serde(default)]
    pub range: Option<RangePolicy>,
    // series
    #[serde(default)]
    pub formula: Option<CoefficientFormula>,
    #[serde(default)]
    pub lambda_max: Option<f64>,
    #[serde(default)]
    pub coefficients_output: Option<PathBuf>,
    // time reversal
    #[serde(default)]
    pub sound_speed: Option<SpeedConfig>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub cutoff: Option<Cutoff>,
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub neumann_iterations: Option<usize>,
}

/// Shell family shared by the focus and AET stages. The surface defaults to
/// the boundary nodes of the working grid and `r_max` to the farthest
/// grid point plus two cells.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    pub n_radii: usize,
    #[serde(default)]
    pub surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub r_max: Option<f64>,
    /// N-pulse half width; defaults to two radial steps.
    #[serde(default)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusStage {
    /// Field or interior-map file.
    pub input: PathBuf,
    /// Tag for plain field inputs.
    #[serde(default)]
    pub tag: Option<String>,
    pub basis: BasisConfig,
    #[serde(default)]
    pub noise_level: f64,
    /// Output grid; defaults to the input grid.
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub measurements_output: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Affine pattern: potential `x·d` (Dirichlet) or current `n·d` (Neumann).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub boundary: BoundaryKind,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AetStage {
    /// True conductivity, used to synthesize the focused interior data.
    pub input: PathBuf,
    pub patterns: Vec<PatternConfig>,
    /// Pattern index pairs `(i, j)` of the observed maps `σ∇u_i·∇u_j`.
    pub maps: Vec<[usize; 2]>,
    pub basis: BasisConfig,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default = "default_true")]
    pub band_limit: bool,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub sigma0: Option<f64>,
    #[serde(default)]
    pub sigma_min: Option<f64>,
    #[serde(default)]
    pub sigma_max: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    pub output: PathBuf,
    #[serde(default)]
    pub report_output: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsStage {
    /// Field, interior map or sinogram.
    pub input: PathBuf,
    /// Same kind of file as `input`.
    pub truth: PathBuf,
    pub output: PathBuf,
    /// Fail the stage when the relative L² error exceeds this.
    #[serde(default)]
    pub max_relative_l2: Option<f64>,
}

/// Command-line overrides applied to the document before hashing.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Replaces `beta` in every AET stage.
    pub beta: Option<f64>,
}

pub fn load(path: &Path, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { stage: "config".into(), path: path.to_path_buf(), message: e.to_string() })?;
    parse(&text, ov)
}

pub fn parse(text: &str, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| schema("config", e.to_string()))?;
    if let Value::Object(map) = &mut doc {
        if let Some(seed) = ov.seed {
            map.insert("seed".into(), seed.into());
        }
        if let (Some(beta), Some(Value::Array(stages))) = (ov.beta, map.get_mut("stages")) {
            for s in stages.iter_mut().filter(|s| s.get("stage").and_then(Value::as_str) == Some("aet")) {
                s["beta"] = beta.into();
            }
        }
    }
    // where artifacts land is not part of an experiment's identity
    let mut hashed = doc.clone();
    if let Value::Object(map) = &mut hashed {
        map.remove("output_dir");
    }
    let hash = hex(&Sha256::digest(hashed.to_string().as_bytes()));
    let header: Header = typed(&doc, "")?;
    let mut stages = Vec::with_capacity(header.stages.len());
    for (i, raw) in header.stages.iter().enumerate() {
        let at = format!("stages[{i}]");
        let Value::Object(obj) = raw else {
            return Err(schema("config", format!("{at}: expected an object")));
        };
        let mut body = obj.clone();
        let tag = match body.remove("stage") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(schema("config", format!("{at}.stage: expected a string"))),
            None => return Err(schema("config", format!("{at}.stage: missing field"))),
        };
        let body = Value::Object(body);
        let stage = match tag.as_str() {
            "phantom" => Stage::Phantom(typed(&body, &at)?),
            "simulate" => Stage::Simulate(typed(&body, &at)?),
            "reconstruct" => Stage::Reconstruct(typed(&body, &at)?),
            "focus" => Stage::Focus(typed(&body, &at)?),
            "aet" => Stage::Aet(typed(&body, &at)?),
            "metrics" => Stage::Metrics(typed(&body, &at)?),
            other => {
                let known: Vec<&str> = StageKind::ALL.iter().map(|k| k.name()).collect();
                return Err(schema(
                    "config",
                    format!("{at}.stage: unknown stage `{other}`, expected one of {}", known.join(", ")),
                ));
            }
        };
        validate(&stage).map_err(|(field, msg)| schema("config", format!("{at}.{field}: {msg}")))?;
        stages.push(stage);
    }
    Ok(ExperimentConfig {
        name: header.name,
        seed: header.seed,
        output_dir: ov.output_dir.clone().or(header.output_dir).unwrap_or_else(|| PathBuf::from(".")),
        stages,
        hash,
    })
}

fn schema(stage: &str, message: String) -> CliError {
    CliError::Schema { stage: stage.into(), message }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Deserialize with the failing field path in the message.
fn typed<T: DeserializeOwned>(v: &Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        schema("config", format!("{path}: {}", e.inner()))
    })
}

type FieldError = (&'static str, String);

fn check<E: fmt::Display>(field: &'static str, r: Result<(), E>) -> Result<(), FieldError> {
    r.map_err(|e| (field, e.to_string()))
}

fn nonneg(field: &'static str, v: f64) -> Result<(), FieldError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((field, format!("{v} must be finite and non-negative")))
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), FieldError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((field, format!("{v} must be finite and positive")))
    }
}

fn validate_speed(field: &'static str, s: &SpeedConfig, grid: Option<&GridSpec>) -> Result<(), FieldError> {
    match s {
        SpeedConfig::Constant(c) => positive(field, *c),
        SpeedConfig::Phantom(p) => match grid {
            Some(g) => check(field, p.validate(g)),
            None => Ok(()),
        },
        SpeedConfig::File(_) => Ok(()),
    }
}

fn validate_basis(b: &BasisConfig) -> Result<(), FieldError> {
    if b.n_radii < 5 {
        return Err(("basis.n_radii", format!("{} radii, need at least 5", b.n_radii)));
    }
    if let Some(s) = &b.surface {
        check("basis.surface", ObservationSurface::from_spec(s.clone()).map(|_| ()))?;
    }
    if let Some(r) = b.r_max {
        positive("basis.r_max", r)?;
    }
    if let Some(h) = b.half_width {
        positive("basis.half_width", h)?;
        if b.kind == BasisKind::DeltaShell {
            return Err(("basis.half_width", "only meaningful for n_shaped_shell".into()));
        }
    }
    Ok(())
}

/// Semantic checks that need no input files.
fn validate(stage: &Stage) -> Result<(), FieldError> {
    match stage {
        Stage::Phantom(s) => {
            let g = s.grid.build().map_err(|e| ("grid", e.to_string()))?;
            check("phantom", s.phantom.validate(&g))
        }
        Stage::Simulate(s) => {
            check("surface", ObservationSurface::from_spec(s.surface.clone()).map(|_| ()))?;
            validate_speed("sound_speed", &s.sound_speed, None)?;
            if s.model != SimModel::Wave && !matches!(s.sound_speed, SpeedConfig::Constant(_)) {
                return Err(("sound_speed", "spherical integrals and Kirchhoff data need a constant speed".into()));
            }
            positive("t_final", s.t_final)?;
            if let Some(dt) = s.dt {
                positive("dt", dt)?;
            }
            nonneg("noise_level", s.noise_level)
        }
        Stage::Reconstruct(s) => {
            let g = s.grid.build().map_err(|e| ("grid", e.to_string()))?;
            let fbp = s.method == MethodName::Fbp;
            let series = s.method == MethodName::Series;
            let tr = s.method == MethodName::TimeReversal;
            let misplaced: [(&'static str, bool, bool); 10] = [
                ("variant", s.variant.is_some(), fbp),
                ("range", s.range.is_some(), fbp),
                ("formula", s.formula.is_some(), series),
                ("lambda_max", s.lambda_max.is_some(), series),
                ("coefficients_output", s.coefficients_output.is_some(), series),
                ("sound_speed", s.sound_speed.is_some(), tr),
                ("t_final", s.t_final.is_some(), tr),
                ("cutoff", s.cutoff.is_some(), tr),
                ("window", s.window.is_some(), tr),
                ("neumann_iterations", s.neumann_iterations.is_some(), tr),
            ];
            if let Some((field, _, _)) = misplaced.iter().find(|(_, set, ok)| *set && !ok) {
                return Err((field, format!("not a parameter of method {:?}", s.method)));
            }
            if fbp {
                if s.variant.is_none() {
                    return Err(("variant", "required for method fbp".into()));
                }
                if g.dim() != 3 {
                    return Err(("grid.dim", "backprojection formulas are 3D only".into()));
                }
            }
            if let Some(l) = s.lambda_max {
                positive("lambda_max", l)?;
            }
            if let Some(c) = &s.sound_speed {
                validate_speed("sound_speed", c, Some(&g))?;
            }
            if let Some(t) = s.t_final {
                positive("t_final", t)?;
            }
            if let Some(w) = s.window {
                nonneg("window", w)?;
            }
            Ok(())
        }
        Stage::Focus(s) => {
            validate_basis(&s.basis)?;
            if let Some(g) = &s.grid {
                let g = g.build().map_err(|e| ("grid", e.to_string()))?;
                if g.dim() != 2 && g.dim() != 3 {
                    return Err(("grid.dim", "focusing needs a 2D or 3D grid".into()));
                }
            }
            if let Some(t) = &s.tag {
                if !tatkit::focusing::REGISTERED_TAGS.contains(&t.as_str()) {
                    return Err(("tag", format!("unregistered tag `{t}`")));
                }
            }
            nonneg("noise_level", s.noise_level)
        }
        Stage::Aet(s) => {
            validate_basis(&s.basis)?;
            if s.patterns.is_empty() {
                return Err(("patterns", "at least one current pattern is required".into()));
            }
            for p in &s.patterns {
                if p.direction.len() != 2 || p.direction.iter().any(|v| !v.is_finite()) {
                    return Err(("patterns", "directions must be two finite numbers".into()));
                }
            }
            if s.maps.is_empty() {
                return Err(("maps", "at least one observed map is required".into()));
            }
            if let Some(m) = s.maps.iter().find(|m| m.iter().any(|&i| i >= s.patterns.len())) {
                return Err(("maps", format!("pair {m:?} refers to a missing pattern")));
            }
            nonneg("noise_level", s.noise_level)?;
            if let Some(b) = s.beta {
                nonneg("beta", b)?;
            }
            for (f, v) in [("sigma0", s.sigma0), ("sigma_min", s.sigma_min), ("sigma_max", s.sigma_max), ("grad_tol", s.grad_tol)] {
                if let Some(v) = v {
                    positive(f, v)?;
                }
            }
            Ok(())
        }
        Stage::Metrics(s) => {
            if let Some(m) = s.max_relative_l2 {
                nonneg("max_relative_l2", m)?;
            }
            Ok(())
        }
    }
}
