//! Time-reversal reconstruction on the domain enclosed by the observation
//! surface.
//!
//! The lattice of the sound-speed field is split into interior nodes
//! (strictly inside the surface), boundary nodes (outside, with an interior
//! neighbour) and everything else. The leapfrog scheme runs backward from a
//! zero state at `t = T` with Dirichlet data on the boundary nodes, taken
//! from the nearest detectors.

use std::collections::HashMap;
use std::f64::consts::PI;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{check_cfl, check_speed, max_stable_dt, solve_wave_forward_with, ForwardOptions};
use crate::grid::{GridSpec, Point, ScalarField};
use crate::interp::cubic_at;
use crate::sinogram::{Sinogram, SinogramKind};
use crate::surface::ObservationSurface;
use crate::wave::{mask_runs, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// Data used as recorded up to `T`.
    HardZero,
    /// Data multiplied by a cosine taper that reaches zero at `T`.
    #[default]
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeReversalConfig {
    /// Terminal time `T`.
    pub t_final: f64,
    #[serde(default)]
    pub cutoff: Cutoff,
    /// Taper length; defaults to a tenth of `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default)]
    pub neumann_iterations: usize,
}

impl TimeReversalConfig {
    pub fn new(t_final: f64) -> Self {
        TimeReversalConfig { t_final, cutoff: Cutoff::Smoothed, window: None, neumann_iterations: 0 }
    }

    pub fn hard(t_final: f64) -> Self {
        TimeReversalConfig { cutoff: Cutoff::HardZero, ..Self::new(t_final) }
    }

    pub fn window_length(&self) -> f64 {
        self.window.unwrap_or(0.1 * self.t_final)
    }

    /// `T` may exceed the last sample by up to half a step; it is rounded
    /// to the nearest sample.
    pub fn validate(&self, duration: f64, dt: f64) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument(format!("terminal time {} must be positive", self.t_final)));
        }
        if self.t_final > duration + 0.5 * dt {
            return Err(Error::InvalidArgument(format!(
                "terminal time {} exceeds the data duration {duration}",
                self.t_final
            )));
        }
        let w = self.window_length();
        if self.cutoff == Cutoff::Smoothed && !(w > 0.0 && w < self.t_final) {
            return Err(Error::InvalidArgument(format!("taper length {w} must lie in (0, T)")));
        }
        Ok(())
    }

    /// Weight applied to the data at time `t`.
    pub fn weight(&self, t: f64) -> f64 {
        match self.cutoff {
            Cutoff::HardZero => 1.0,
            Cutoff::Smoothed => {
                let w = self.window_length();
                let start = self.t_final - w;
                if t <= start {
                    1.0
                } else if t >= self.t_final {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * (t - start) / w).cos())
                }
            }
        }
    }
}

/// Interior/boundary split of a lattice by a closed surface, and the
/// detector weights feeding each boundary node.
pub struct InteriorDomain {
    pub inside: Vec<bool>,
    pub boundary: Vec<usize>,
    /// Per boundary node: `(detector, weight)` with weights summing to one.
    pub sources: Vec<Vec<(usize, f64)>>,
}

/// Detectors bucketed by lattice cell for nearest-point queries.
struct Buckets<'a> {
    grid: &'a GridSpec,
    cells: HashMap<[i64; 3], Vec<usize>>,
    points: &'a [Point],
}

impl<'a> Buckets<'a> {
    fn key(grid: &GridSpec, p: &Point) -> [i64; 3] {
        let mut k = [0i64; 3];
        for a in 0..grid.dim() {
            k[a] = ((p[a] - grid.origin[a]) / grid.spacing[a]).round() as i64;
        }
        k
    }

    fn new(grid: &'a GridSpec, points: &'a [Point]) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(grid, p)).or_default().push(i);
        }
        Buckets { grid, cells, points }
    }

    fn nearest(&self, p: &Point) -> Option<usize> {
        let d = self.grid.dim();
        let k = Self::key(self.grid, p);
        let h = self.grid.min_spacing();
        let mut best: Option<(f64, usize)> = None;
        let max_ring = self.grid.shape.iter().max().copied().unwrap_or(1) as i64 + 1;
        for ring in 0..=max_ring {
            // anything beyond this ring is farther than `ring·h`
            if let Some((dist, _)) = best {
                if dist < (ring as f64 - 1.0) * h {
                    break;
                }
            }
            let r = ring;
            let zr = if d == 3 { r } else { 0 };
            for i in -r..=r {
                for j in -r..=r {
                    for l in -zr..=zr {
                        if i.abs().max(j.abs()).max(l.abs()) != r {
                            continue;
                        }
                        if let Some(list) = self.cells.get(&[k[0] + i, k[1] + j, k[2] + l]) {
                            for &q in list {
                                let dist = crate::grid::dist(p, &self.points[q]);
                                if best.is_none_or(|(b, bi)| dist < b || (dist == b && q < bi)) {
                                    best = Some((dist, q));
                                }
                            }
                        }
                    }
                }
            }
        }
        best.map(|b| b.1)
    }
}

impl InteriorDomain {
    pub fn new(grid: &GridSpec, surface: &ObservationSurface) -> Result<Self> {
        if surface.dim != grid.dim() {
            return Err(Error::Surface(format!("{}D surface for a {}D grid", surface.dim, grid.dim())));
        }
        let d = grid.dim();
        let shape = grid.shape3();
        let strides = grid.strides3();
        let n = grid.len();
        let inside: Vec<bool> = (0..n).map(|i| surface.contains(&grid.node_at(i), 0.0)).collect();
        if !inside.iter().any(|&b| b) {
            return Err(Error::Surface("no grid node lies inside the observation surface".into()));
        }
        let mut is_boundary = vec![false; n];
        for i in 0..n {
            if !inside[i] {
                continue;
            }
            let idx = grid.multi_index(i);
            for a in 0..d {
                if idx[a] == 0 || idx[a] + 1 == shape[a] {
                    return Err(Error::Surface("the grid must extend beyond the observation surface".into()));
                }
                for j in [i - strides[a], i + strides[a]] {
                    if !inside[j] {
                        is_boundary[j] = true;
                    }
                }
            }
        }
        let boundary: Vec<usize> = (0..n).filter(|&i| is_boundary[i]).collect();

        // splat each detector onto its nearest boundary node
        let nodes: Vec<Point> = boundary.iter().map(|&i| grid.node_at(i)).collect();
        let node_buckets = Buckets::new(grid, &nodes);
        let mut sources: Vec<Vec<(usize, f64)>> = vec![Vec::new(); boundary.len()];
        for (q, y) in surface.points.iter().enumerate() {
            if let Some(k) = node_buckets.nearest(y) {
                sources[k].push((q, surface.weights[q]));
            }
        }
        // nodes nobody splatted onto copy their nearest detector
        let det_buckets = Buckets::new(grid, &surface.points);
        for (k, src) in sources.iter_mut().enumerate() {
            if src.is_empty() {
                let q = det_buckets.nearest(&nodes[k]).expect("surface has detectors");
                src.push((q, 1.0));
            }
            // a detector sitting on the node overrides the neighbours
            let tol = 1e-9 * grid.min_spacing();
            if src.iter().any(|&(q, _)| crate::grid::dist(&nodes[k], &surface.points[q]) <= tol) {
                src.retain(|&(q, _)| crate::grid::dist(&nodes[k], &surface.points[q]) <= tol);
            }
            let total: f64 = src.iter().map(|s| s.1).sum();
            for s in src.iter_mut() {
                s.1 /= total;
            }
        }
        Ok(InteriorDomain { inside, boundary, sources })
    }
}

/// Boundary-node traces sampled at the solver step `dt`, `[node][step]`.
fn boundary_traces(g: &Sinogram, dom: &InteriorDomain, dt: f64, steps: usize, cfg: &TimeReversalConfig) -> Vec<Vec<f64>> {
    let ratio = dt / g.dt;
    dom.sources
        .iter()
        .map(|src| {
            (0..=steps)
                .map(|j| {
                    let t = j as f64 * dt;
                    let u = (j as f64 * ratio).min((g.n_times - 1) as f64);
                    let v: f64 = src.iter().map(|&(q, w)| w * cubic_at(g.trace(q), u).unwrap_or(0.0)).sum();
                    cfg.weight(t) * v
                })
                .collect()
        })
        .collect()
}

/// Leapfrog scheme on the interior nodes of a closed surface, with
/// Dirichlet values on the boundary nodes. No damping anywhere.
pub struct InteriorScheme {
    pub domain: InteriorDomain,
    grid: GridSpec,
    stencil: Stencil,
    pub dt: f64,
}

/// Two consecutive levels `(p^{n}, p^{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InteriorScheme {
    pub fn new(c: &ScalarField, surface: &ObservationSurface, dt: f64) -> Result<Self> {
        let (_, c_max) = check_speed(c)?;
        let grid = c.grid.clone();
        check_cfl(dt, &grid, c_max)?;
        let domain = InteriorDomain::new(&grid, surface)?;
        let h = grid.spacing3();
        let stencil = Stencil {
            shape: grid.shape3(),
            strides: grid.strides3(),
            axes: grid.dim(),
            inv_h2: [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])],
            c2dt2: c.values.iter().map(|v| (v * dt).powi(2)).collect(),
            damp: None,
            runs: mask_runs(&domain.inside),
        };
        Ok(InteriorScheme { domain, grid, stencil, dt })
    }

    fn set_boundary(&self, p: &mut [f64], data: Option<&[Vec<f64>]>, level: usize) {
        for (k, &b) in self.domain.boundary.iter().enumerate() {
            p[b] = data.map_or(0.0, |d| d[k][level]);
        }
    }

    /// March `steps` steps from rest at `f`. `data[node][level]` gives the
    /// boundary values, zero when absent. Returns the last two levels.
    pub fn forward(&self, f: &ScalarField, steps: usize, data: Option<&[Vec<f64>]>) -> LevelPair {
        let mut lower: Vec<f64> = f.values.iter().zip(&self.domain.inside).map(|(v, &i)| if i { *v } else { 0.0 }).collect();
        self.set_boundary(&mut lower, data, 0);
        let mut upper = self.stencil.start_from_rest(&lower);
        self.set_boundary(&mut upper, data, 1);
        for level in 2..=steps {
            self.stencil.step(&mut lower, &upper);
            self.set_boundary(&mut lower, data, level);
            std::mem::swap(&mut lower, &mut upper);
        }
        if steps == 0 {
            upper = lower.clone();
        }
        LevelPair { lower, upper }
    }

    /// Discrete energy of a level pair; exactly conserved by
    /// [`InteriorScheme::forward`] with zero boundary values.
    pub fn energy(&self, s: &LevelPair) -> f64 {
        self.stencil.energy(&s.lower, &s.upper) * self.grid.cell_volume()
    }

    /// March backward from the pair `(p^{N−1}, p^N)` at `N = steps` to
    /// level 0, returning `p^0` restricted to the interior.
    pub fn backward(&self, terminal: &LevelPair, steps: usize, data: Option<&[Vec<f64>]>) -> ScalarField {
        let mut ahead = terminal.upper.clone();
        let mut cur = terminal.lower.clone();
        if steps == 0 {
            cur = ahead.clone();
        } else {
            self.set_boundary(&mut ahead, data, steps);
            self.set_boundary(&mut cur, data, steps - 1);
            for level in (1..steps).rev() {
                self.stencil.step(&mut ahead, &cur);
                self.set_boundary(&mut ahead, data, level - 1);
                std::mem::swap(&mut ahead, &mut cur);
            }
        }
        let values = cur.iter().zip(&self.domain.inside).map(|(v, &i)| if i { *v } else { 0.0 }).collect();
        ScalarField { grid: self.grid.clone(), values, name: "interior".into() }
    }

    /// Boundary-node values `[node][level]` from detector traces, tapered
    /// by `cfg` and resampled to the scheme step.
    pub fn boundary_data(&self, g: &Sinogram, steps: usize, cfg: &TimeReversalConfig) -> Vec<Vec<f64>> {
        boundary_traces(g, &self.domain, self.dt, steps, cfg)
    }
}

/// Backward solve from a zero state at `T` with the measured data as
/// Dirichlet values. Returns `p(·, 0)` on the grid of `c`, zero outside the
/// interior.
pub fn time_reverse(g: &Sinogram, c: &ScalarField, cfg: &TimeReversalConfig) -> Result<ScalarField> {
    if g.kind != SinogramKind::Pressure {
        return Err(Error::Sinogram(format!("time reversal needs pressure traces, got {:?}", g.kind)));
    }
    g.validate()?;
    cfg.validate(g.duration(), g.dt)?;
    let (_, c_max) = check_speed(c)?;

    // Solver step: the data step when stable, else an integer subdivision.
    let limit = max_stable_dt(&c.grid, c_max);
    let sub = if g.dt <= limit * (1.0 + 1e-12) { 1 } else { (g.dt / limit).ceil() as usize };
    let dt = g.dt / sub as f64;
    if sub > 1 {
        info!("time reversal: resampling data to dt = {dt:.4e} ({sub} substeps)");
    }
    let scheme = InteriorScheme::new(c, &g.surface, dt)?;
    let steps = ((cfg.t_final / dt).round() as usize).min((g.n_times - 1) * sub);
    let data = scheme.boundary_data(g, steps, cfg);
    let n = c.grid.len();
    let zero = LevelPair { lower: vec![0.0; n], upper: vec![0.0; n] };
    // the zero state sits at levels N and N+1
    let mut out = scheme.backward(&zero, steps + 1, Some(&extend_by_zero_level(data)));
    out.name = "time_reversal".into();
    Ok(out)
}

/// Append a level after the last so a zero pair can sit at `N, N+1`.
fn extend_by_zero_level(mut data: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for d in &mut data {
        d.push(0.0);
    }
    data
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannReport {
    /// `‖g − F f_n‖ / ‖g‖` for `n = 0..`, where `f_0` is plain time reversal.
    pub residuals: Vec<f64>,
    /// Index of the returned iterate.
    pub best: usize,
}

fn forward_like(f: &ScalarField, c: &ScalarField, g: &Sinogram) -> Result<Sinogram> {
    let opts = ForwardOptions { check_support: false, ..ForwardOptions::default() };
    let out = solve_wave_forward_with(f, c, &g.surface, g.duration(), g.dt, &opts)?;
    Ok(out.sinogram)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fixed-point iteration `f_{n+1} = f_n + A(g − F f_n)` with `A` the
/// smoothed time reversal and `F` the free-space forward solver. Stops at
/// the first residual increase and returns the best iterate.
pub fn neumann_refine(g: &Sinogram, c: &ScalarField, cfg: &TimeReversalConfig) -> Result<(ScalarField, NeumannReport)> {
    if cfg.neumann_iterations == 0 {
        return Err(Error::InvalidArgument("neumann refinement needs at least one iteration".into()));
    }
    let cfg = TimeReversalConfig { cutoff: Cutoff::Smoothed, ..cfg.clone() };
    let g_norm = norm(&g.values);
    let mut f = time_reverse(g, c, &cfg)?;
    if g_norm == 0.0 {
        return Ok((f, NeumannReport { residuals: vec![0.0; cfg.neumann_iterations + 1], best: cfg.neumann_iterations }));
    }
    let residual_of = |f: &ScalarField| -> Result<Sinogram> {
        let model = forward_like(f, c, g)?;
        let r: Vec<f64> = g.values.iter().zip(&model.values).map(|(a, b)| a - b).collect();
        Ok(g.with_values(r, SinogramKind::Pressure))
    };
    let mut r = residual_of(&f)?;
    let mut residuals = vec![norm(&r.values) / g_norm];
    for it in 1..=cfg.neumann_iterations {
        let update = time_reverse(&r, c, &cfg)?;
        let next = f.axpby(1.0, &update, 1.0)?;
        let r_next = residual_of(&next)?;
        let rn = norm(&r_next.values) / g_norm;
        info!("neumann iteration {it}: residual {rn:.4e}");
        if rn > *residuals.last().unwrap() {
            warn!(
                "residual grew at iteration {it} ({rn:.4e} > {:.4e}); returning iterate {}",
                residuals.last().unwrap(),
                it - 1
            );
            residuals.push(rn);
            return Ok((f, NeumannReport { best: it - 1, residuals }));
        }
        residuals.push(rn);
        f = next;
        r = r_next;
    }
    f.name = "neumann".into();
    Ok((f, NeumannReport { best: cfg.neumann_iterations, residuals }))
}
