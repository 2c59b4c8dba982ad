//! Eigenfunction-expansion reconstruction in a box with constant sound
//! speed.
//!
//! `ψ_m(x) = Π_a √(2/L_a) sin(m_a π (x_a − lo_a)/L_a)` are the Dirichlet
//! eigenfunctions of `−c²Δ` with eigenvalues `λ_m² = c²π² Σ (m_a/L_a)²`.
//! Projecting `p_tt = c²Δp` onto `ψ_m` gives
//! `p_m'' + λ_m² p_m = −c² g_m(t)` with `g_m(t) = ∫_S g ∂_n ψ_m`, and decay
//! of `p` inside the box gives `f_m = −(c²/λ_m) ∫_0^∞ sin(λ_m t) g_m(t) dt`.
//! Integrating by parts yields the two other forms.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dst::dst_nd;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point, ScalarField};
use crate::io::{decode_container, encode_container, Provenance};
use crate::quadrature::trapezoid_weights;
use crate::sinogram::{Sinogram, SinogramKind};

pub const COEFF_MAGIC: &[u8; 8] = b"TATMOD01";

/// Fraction of a time series' energy allowed in its last tenth before the
/// truncated time integrals are flagged.
pub const TAIL_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub c: f64,
    pub modes: Vec<Vec<usize>>,
}

impl EigenBasis {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, c: f64, modes: Vec<Vec<usize>>) -> Result<Self> {
        let d = lo.len();
        if (d != 2 && d != 3) || hi.len() != d {
            return Err(Error::InvalidArgument("box bounds must have 2 or 3 entries".into()));
        }
        if (0..d).any(|a| !(hi[a] > lo[a])) {
            return Err(Error::InvalidArgument("box must have positive extent".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::SoundSpeed(format!("constant speed {c} must be positive")));
        }
        if let Some(m) = modes.iter().find(|m| m.len() != d || m.contains(&0)) {
            return Err(Error::InvalidArgument(format!("mode {m:?} must have {d} indices, all >= 1")));
        }
        Ok(EigenBasis { lo, hi, c, modes })
    }

    /// All modes with `λ ≤ lambda_max` and `m_a ≤ max_index[a]`.
    pub fn isotropic(lo: Vec<f64>, hi: Vec<f64>, c: f64, lambda_max: f64, max_index: Option<&[usize]>) -> Result<Self> {
        let d = lo.len();
        let base = EigenBasis::new(lo, hi, c, Vec::new())?;
        let l = base.lengths();
        let mut cap = [0usize; 3];
        for a in 0..d {
            cap[a] = (lambda_max * l[a] / (c * PI)).floor().max(0.0) as usize;
            if let Some(mx) = max_index {
                cap[a] = cap[a].min(mx[a]);
            }
        }
        let mut modes = Vec::new();
        let c3 = if d == 3 { cap[2] } else { 1 };
        for i in 1..=cap[0] {
            for j in 1..=cap[1] {
                for k in 1..=c3 {
                    let m: Vec<usize> = if d == 3 { vec![i, j, k] } else { vec![i, j] };
                    if base.eigenvalue(&m) <= lambda_max * (1.0 + 1e-12) {
                        modes.push(m);
                    }
                }
            }
        }
        Ok(EigenBasis { modes, ..base })
    }

    /// Basis for a cube observation surface, truncated below the detector
    /// aliasing limit `m_a < n_a / 2`. `lambda_max` defaults to the largest
    /// isotropic cutoff that respects that limit.
    pub fn for_surface(surface: &crate::surface::ObservationSurface, c: f64, lambda_max: Option<f64>) -> Result<Self> {
        let (lo, hi, n) = surface.cube_params()?;
        let lim: Vec<usize> = n.iter().map(|&k| aliasing_limit(k)).collect();
        let l: Vec<f64> = (0..lo.len()).map(|a| hi[a] - lo[a]).collect();
        let default = (0..lo.len()).map(|a| c * PI * lim[a] as f64 / l[a]).fold(f64::INFINITY, f64::min);
        Self::isotropic(lo, hi, c, lambda_max.unwrap_or(default), Some(&lim))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn lengths(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.hi[a] - self.lo[a]).collect()
    }

    pub fn eigenvalue(&self, m: &[usize]) -> f64 {
        let l = self.lengths();
        self.c * PI * m.iter().zip(&l).map(|(&k, l)| (k as f64 / l).powi(2)).sum::<f64>().sqrt()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| self.eigenvalue(m)).collect()
    }

    fn factor(&self, a: usize, m: usize, x: f64) -> f64 {
        let l = self.hi[a] - self.lo[a];
        (2.0 / l).sqrt() * (m as f64 * PI * (x - self.lo[a]) / l).sin()
    }

    pub fn psi(&self, m: &[usize], x: &Point) -> f64 {
        (0..self.dim()).map(|a| self.factor(a, m[a], x[a])).product()
    }

    /// Outward normal derivative on face `2·axis + side`, evaluated from the
    /// tangential coordinates of `x`.
    pub fn dpsi_dn(&self, m: &[usize], x: &Point, face: u8) -> f64 {
        let (axis, side) = ((face / 2) as usize, face % 2);
        let l = self.hi[axis] - self.lo[axis];
        let sign = if side == 0 {
            -1.0
        } else if m[axis].is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let tangential: f64 = (0..self.dim()).filter(|&b| b != axis).map(|b| self.factor(b, m[b], x[b])).product();
        sign * (2.0 / l).sqrt() * (m[axis] as f64 * PI / l) * tangential
    }

    pub fn diameter(&self) -> f64 {
        self.lengths().iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Default final time: three box diameters of travel.
    pub fn default_t_max(&self) -> f64 {
        3.0 * self.diameter() / self.c
    }
}

/// Largest mode index resolvable by `n` detectors per axis.
pub fn aliasing_limit(n: usize) -> usize {
    (n.saturating_sub(1)) / 2
}

/// Per-mode time series `g_k(t_j)`, mode-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSeries {
    pub dt: f64,
    pub n_times: usize,
    pub values: Vec<f64>,
}

impl ModeSeries {
    pub fn series(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_times..(k + 1) * self.n_times]
    }
}

fn check_surface(g: &Sinogram, basis: &EigenBasis) -> Result<Vec<usize>> {
    if g.kind != SinogramKind::Pressure {
        return Err(Error::Sinogram(format!("series projection needs pressure traces, got {:?}", g.kind)));
    }
    let (lo, hi, n) = g.surface.cube_params()?;
    let d = basis.dim();
    if lo.len() != d {
        return Err(Error::Surface("surface and basis dimensions differ".into()));
    }
    for a in 0..d {
        let tol = 1e-12 * (basis.hi[a] - basis.lo[a]);
        if (lo[a] - basis.lo[a]).abs() > tol || (hi[a] - basis.hi[a]).abs() > tol {
            return Err(Error::Surface("cube surface does not match the basis box".into()));
        }
    }
    for m in &basis.modes {
        for a in 0..d {
            if m[a] as f64 >= n[a] as f64 / 2.0 {
                return Err(Error::InvalidArgument(format!(
                    "mode {m:?} aliases on {} detectors along axis {a}",
                    n[a]
                )));
            }
        }
    }
    Ok(n)
}

/// `g_k(t) = ∫_S g(x, t) ∂_n ψ_k(x) dx` by the face-lattice trapezoid rule,
/// evaluated with one sine transform per face and time sample.
pub fn project_boundary_data(g: &Sinogram, basis: &EigenBasis) -> Result<ModeSeries> {
    let n = check_surface(g, basis)?;
    let d = basis.dim();
    let l = basis.lengths();
    let h: Vec<f64> = (0..d).map(|a| l[a] / (n[a] - 1) as f64).collect();
    let nt = g.n_times;

    // detector offset of each face, in construction order
    let mut faces = Vec::new();
    let mut offset = 0;
    for axis in 0..d {
        let others: Vec<usize> = (0..d).filter(|&b| b != axis).collect();
        let size: usize = others.iter().map(|&b| n[b]).product();
        for side in 0..2u8 {
            faces.push((axis, side, others.clone(), offset));
            offset += size;
        }
    }

    let per_time: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|j| {
            let mut out = vec![0.0; basis.len()];
            for (axis, side, others, off) in &faces {
                let inner: Vec<usize> = others.iter().map(|&b| n[b] - 2).collect();
                let mut buf = vec![0.0; inner.iter().product()];
                let mut scale = (2.0 / l[*axis]).sqrt();
                for &b in others {
                    scale *= (2.0 / l[b]).sqrt() * h[b];
                }
                if d == 2 {
                    for i in 0..inner[0] {
                        buf[i] = g.values[(off + i + 1) * nt + j];
                    }
                } else {
                    let nc = n[others[1]];
                    for i in 0..inner[0] {
                        for k in 0..inner[1] {
                            buf[i * inner[1] + k] = g.values[(off + (i + 1) * nc + k + 1) * nt + j];
                        }
                    }
                }
                dst_nd(&mut buf, &inner);
                for (q, m) in basis.modes.iter().enumerate() {
                    let ma = m[*axis];
                    let sign = if *side == 0 || ma % 2 == 1 { -1.0 } else { 1.0 };
                    let idx = if d == 2 { m[others[0]] - 1 } else { (m[others[0]] - 1) * inner[1] + m[others[1]] - 1 };
                    out[q] += sign * scale * (ma as f64 * PI / l[*axis]) * buf[idx];
                }
            }
            out
        })
        .collect();

    let mut values = vec![0.0; basis.len() * nt];
    for (j, row) in per_time.iter().enumerate() {
        for (q, v) in row.iter().enumerate() {
            values[q * nt + j] = *v;
        }
    }
    Ok(ModeSeries { dt: g.dt, n_times: nt, values })
}

/// Reference projection with the surface's own quadrature weights and the
/// closed-form normal derivative at every detector.
pub fn project_boundary_data_direct(g: &Sinogram, basis: &EigenBasis) -> Result<ModeSeries> {
    check_surface(g, basis)?;
    let s = &g.surface;
    let nt = g.n_times;
    let rows: Vec<Vec<f64>> = basis
        .modes
        .par_iter()
        .map(|m| {
            let mut row = vec![0.0; nt];
            for i in 0..s.len() {
                let wd = s.weights[i] * basis.dpsi_dn(m, &s.points[i], s.faces[i]);
                for (r, v) in row.iter_mut().zip(g.trace(i)) {
                    *r += wd * v;
                }
            }
            row
        })
        .collect();
    Ok(ModeSeries { dt: g.dt, n_times: nt, values: rows.concat() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientFormula {
    /// `f = −(c²/λ²) g(0) + (c²/λ³) ∫ sin(λt) g''(t) dt`
    A,
    /// `f = −(c²/λ²) [g(0) + ∫ cos(λt) g'(t) dt]`
    #[default]
    B,
    /// `f = −(c²/λ) ∫ sin(λt) g(t) dt`
    C,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoefficients {
    pub basis: EigenBasis,
    pub values: Vec<f64>,
    /// Largest eigenvalue kept.
    pub lambda_max: f64,
    /// Share of the series energy in the last tenth of the time window.
    pub tail_ratio: Option<f64>,
}

impl ModeCoefficients {
    pub fn new(basis: EigenBasis, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::InvalidArgument(format!("{} values for {} modes", values.len(), basis.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let lambda_max = basis.eigenvalues().into_iter().fold(0.0, f64::max);
        Ok(ModeCoefficients { basis, values, lambda_max, tail_ratio: None })
    }

    pub fn get(&self, m: &[usize]) -> Option<f64> {
        self.basis.modes.iter().position(|k| k == m).map(|i| self.values[i])
    }

    /// Keep only modes with `λ ≤ lambda_max`.
    pub fn truncated(&self, lambda_max: f64) -> ModeCoefficients {
        let keep: Vec<usize> =
            (0..self.basis.len()).filter(|&i| self.basis.eigenvalue(&self.basis.modes[i]) <= lambda_max).collect();
        let basis = EigenBasis { modes: keep.iter().map(|&i| self.basis.modes[i].clone()).collect(), ..self.basis.clone() };
        ModeCoefficients {
            values: keep.iter().map(|&i| self.values[i]).collect(),
            lambda_max: lambda_max.min(self.lambda_max),
            basis,
            tail_ratio: self.tail_ratio,
        }
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

fn derivative(q: &[f64], dt: f64) -> Vec<f64> {
    let n = q.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        return d;
    }
    for j in 1..n - 1 {
        d[j] = (q[j + 1] - q[j - 1]) / (2.0 * dt);
    }
    d[0] = (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * dt);
    d[n - 1] = (3.0 * q[n - 1] - 4.0 * q[n - 2] + q[n - 3]) / (2.0 * dt);
    d
}

fn second_derivative(q: &[f64], dt: f64) -> Vec<f64> {
    let n = q.len();
    let mut d = vec![0.0; n];
    if n < 4 {
        return d;
    }
    let s = 1.0 / (dt * dt);
    for j in 1..n - 1 {
        d[j] = (q[j + 1] - 2.0 * q[j] + q[j - 1]) * s;
    }
    d[0] = (2.0 * q[0] - 5.0 * q[1] + 4.0 * q[2] - q[3]) * s;
    d[n - 1] = (2.0 * q[n - 1] - 5.0 * q[n - 2] + 4.0 * q[n - 3] - q[n - 4]) * s;
    d
}

fn trapezoid_with(q: &[f64], dt: f64, kernel: impl Fn(f64) -> f64) -> f64 {
    let n = q.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for (j, v) in q.iter().enumerate() {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        s += w * v * kernel(j as f64 * dt);
    }
    s * dt
}

/// Energy share of the last tenth of a set of series.
pub fn tail_ratio(series: &ModeSeries) -> f64 {
    let nt = series.n_times;
    let start = nt - (nt / 10).max(1);
    let (mut tail, mut total) = (0.0, 0.0);
    for v in series.values.chunks(nt) {
        for (j, x) in v.iter().enumerate() {
            total += x * x;
            if j >= start {
                tail += x * x;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

pub fn coefficients_from_gk(gk: &ModeSeries, basis: &EigenBasis, formula: CoefficientFormula) -> Result<ModeCoefficients> {
    if gk.values.len() != basis.len() * gk.n_times {
        return Err(Error::InvalidArgument("series count does not match the basis".into()));
    }
    if gk.n_times < 4 {
        return Err(Error::InvalidArgument("need at least 4 time samples".into()));
    }
    let tail = tail_ratio(gk);
    if tail > TAIL_LIMIT {
        warn!(
            "boundary data have not decayed: {:.2}% of the energy lies in the last tenth of the window",
            100.0 * tail
        );
    }
    let c2 = basis.c * basis.c;
    let dt = gk.dt;
    let values: Vec<f64> = basis
        .modes
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let lam = basis.eigenvalue(m);
            let q = gk.series(k);
            match formula {
                CoefficientFormula::C => -(c2 / lam) * trapezoid_with(q, dt, |t| (lam * t).sin()),
                CoefficientFormula::B => {
                    let d1 = derivative(q, dt);
                    -(c2 / (lam * lam)) * (q[0] + trapezoid_with(&d1, dt, |t| (lam * t).cos()))
                }
                CoefficientFormula::A => {
                    let d2 = second_derivative(q, dt);
                    -(c2 / (lam * lam)) * q[0] + (c2 / lam.powi(3)) * trapezoid_with(&d2, dt, |t| (lam * t).sin())
                }
            }
        })
        .collect();
    let mut out = ModeCoefficients::new(basis.clone(), values)?;
    out.tail_ratio = Some(tail);
    Ok(out)
}

/// Sine tables `√(2/L) sin(m π (x_i − lo)/L)` for `m = 1..=m_max` along one
/// axis, row-major `[m−1][i]`.
fn sine_table(lo: f64, l: f64, m_max: usize, xs: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(m_max * xs.len());
    let s = (2.0 / l).sqrt();
    for m in 1..=m_max {
        for &x in xs {
            let inside = x >= lo - 1e-12 * l && x <= lo + l + 1e-12 * l;
            t.push(if inside { s * (m as f64 * PI * (x - lo) / l).sin() } else { 0.0 });
        }
    }
    t
}

fn axis_coords(grid: &GridSpec, a: usize) -> Vec<f64> {
    (0..grid.shape[a]).map(|i| grid.origin[a] + i as f64 * grid.spacing[a]).collect()
}

/// Dense coefficient tensor `[m0−1][m1−1][m2−1]` with the largest index per
/// axis.
fn dense(coeffs: &ModeCoefficients) -> (Vec<f64>, [usize; 3]) {
    let d = coeffs.basis.dim();
    let mut mx = [1usize; 3];
    for m in &coeffs.basis.modes {
        for a in 0..d {
            mx[a] = mx[a].max(m[a]);
        }
    }
    let mut t = vec![0.0; mx[0] * mx[1] * mx[2]];
    for (m, v) in coeffs.basis.modes.iter().zip(&coeffs.values) {
        let k = if d == 3 { m[2] - 1 } else { 0 };
        t[((m[0] - 1) * mx[1] + m[1] - 1) * mx[2] + k] += v;
    }
    (t, mx)
}

/// Contract axis `a` of a row-major 3-index array `x` (`shape`) with a
/// table `[new][old]`, replacing that axis' length.
fn contract(x: &[f64], shape: [usize; 3], a: usize, table: &[f64], new_len: usize) -> (Vec<f64>, [usize; 3]) {
    let old = shape[a];
    let mut out_shape = shape;
    out_shape[a] = new_len;
    let outer: usize = shape[..a].iter().product();
    let inner: usize = shape[a + 1..].iter().product();
    let mut out = vec![0.0; outer * new_len * inner];
    for o in 0..outer {
        for n in 0..new_len {
            let dst = &mut out[(o * new_len + n) * inner..(o * new_len + n + 1) * inner];
            for k in 0..old {
                let w = table[n * old + k];
                if w == 0.0 {
                    continue;
                }
                let src = &x[(o * old + k) * inner..(o * old + k + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    (out, out_shape)
}

fn transpose(t: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut o = vec![0.0; t.len()];
    for r in 0..rows {
        for c in 0..cols {
            o[c * rows + r] = t[r * cols + c];
        }
    }
    o
}

fn check_out_grid(basis: &EigenBasis, grid: &GridSpec) -> Result<()> {
    if grid.dim() != basis.dim() {
        return Err(Error::InvalidArgument("output grid and basis dimensions differ".into()));
    }
    let (lo, hi) = grid.bounds();
    for a in 0..basis.dim() {
        let tol = 1e-9 * (basis.hi[a] - basis.lo[a]);
        if lo[a] < basis.lo[a] - tol || hi[a] > basis.hi[a] + tol {
            return Err(Error::InvalidArgument("output grid leaves the basis box".into()));
        }
    }
    Ok(())
}

/// Direct separable summation of `Σ f_k ψ_k` on any grid inside the box.
pub fn synthesize_direct(coeffs: &ModeCoefficients, out_grid: &GridSpec) -> Result<ScalarField> {
    let b = &coeffs.basis;
    if b.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient set".into()));
    }
    check_out_grid(b, out_grid)?;
    let d = b.dim();
    let (mut x, mx) = dense(coeffs);
    let mut shape = mx;
    let s = out_grid.shape3();
    for a in 0..d {
        let xs = axis_coords(out_grid, a);
        // table [i][m−1]
        let tab = transpose(&sine_table(b.lo[a], b.hi[a] - b.lo[a], mx[a], &xs), mx[a], xs.len());
        let r = contract(&x, shape, a, &tab, s[a]);
        x = r.0;
        shape = r.1;
    }
    ScalarField::new(out_grid.clone(), x, "series")
}

/// Whether the grid nodes are the sine-transform lattice of the box.
fn is_lattice(basis: &EigenBasis, grid: &GridSpec) -> bool {
    (0..basis.dim()).all(|a| {
        let l = basis.hi[a] - basis.lo[a];
        let n = grid.shape[a];
        (grid.origin[a] - basis.lo[a]).abs() <= 1e-12 * l
            && (grid.spacing[a] * (n - 1) as f64 - l).abs() <= 1e-12 * l
            && basis.modes.iter().all(|m| m[a] + 2 <= n)
    })
}

/// `f(x) = Σ f_k ψ_k(x)`, by a sine transform when the grid is the box
/// lattice and by direct summation otherwise.
pub fn synthesize_field(coeffs: &ModeCoefficients, out_grid: &GridSpec) -> Result<ScalarField> {
    let b = &coeffs.basis;
    if b.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient set".into()));
    }
    check_out_grid(b, out_grid)?;
    if !is_lattice(b, out_grid) {
        return synthesize_direct(coeffs, out_grid);
    }
    let d = b.dim();
    let inner: Vec<usize> = (0..d).map(|a| out_grid.shape[a] - 2).collect();
    let norm: f64 = (0..d).map(|a| (2.0 / (b.hi[a] - b.lo[a])).sqrt()).product();
    let mut buf = vec![0.0; inner.iter().product()];
    for (m, v) in b.modes.iter().zip(&coeffs.values) {
        let idx = if d == 2 { (m[0] - 1) * inner[1] + m[1] - 1 } else { ((m[0] - 1) * inner[1] + m[1] - 1) * inner[2] + m[2] - 1 };
        buf[idx] += v * norm;
    }
    dst_nd(&mut buf, &inner);
    let mut out = ScalarField::zeros(out_grid.clone(), "series");
    let s = out_grid.shape3();
    let n2 = if d == 3 { inner[2] } else { 1 };
    for i in 0..inner[0] {
        for j in 0..inner[1] {
            for k in 0..n2 {
                let kk = if d == 3 { k + 1 } else { 0 };
                let dst = ((i + 1) * s[1] + j + 1) * s[2] + kk;
                out.values[dst] = buf[(i * inner[1] + j) * n2 + k];
            }
        }
    }
    Ok(out)
}

/// `⟨f, ψ_k⟩` by the trapezoid rule on the field's grid; nodes outside the
/// box do not contribute.
pub fn analyze_field(f: &ScalarField, basis: &EigenBasis) -> Result<ModeCoefficients> {
    analyze_with(f, basis, |a, mx, xs| {
        let w = trapezoid_weights(xs.len(), f.grid.spacing[a]);
        let mut tab = sine_table(basis.lo[a], basis.hi[a] - basis.lo[a], mx, xs);
        for row in tab.chunks_mut(xs.len()) {
            for (t, wi) in row.iter_mut().zip(&w) {
                *t *= wi;
            }
        }
        tab
    })
}

/// Exact inner products `⟨I f, ψ_k⟩` of the multilinear interpolant `I f`
/// of the nodal values, taken as zero outside the grid. Unlike
/// [`analyze_field`] this stays accurate for modes near the grid Nyquist
/// limit and counts nonzero boundary values.
pub fn analyze_interpolant(f: &ScalarField, basis: &EigenBasis) -> Result<ModeCoefficients> {
    analyze_with(f, basis, |a, mx, xs| hat_table(basis.lo[a], basis.hi[a] - basis.lo[a], mx, xs))
}

/// Adjoint of [`analyze_interpolant`]: nodal values `Σ_k c_k ⟨φ_i, ψ_k⟩`
/// for the hat functions `φ_i` of `grid`.
pub fn interpolant_adjoint(coeffs: &ModeCoefficients, grid: &GridSpec) -> Result<ScalarField> {
    let b = &coeffs.basis;
    if grid.dim() != b.dim() {
        return Err(Error::InvalidArgument("grid and basis dimensions differ".into()));
    }
    let d = b.dim();
    let (mut x, mx) = dense(coeffs);
    let mut shape = mx;
    let s = grid.shape3();
    for a in 0..d {
        let xs = axis_coords(grid, a);
        let tab = transpose(&hat_table(b.lo[a], b.hi[a] - b.lo[a], mx[a], &xs), mx[a], xs.len());
        let r = contract(&x, shape, a, &tab, s[a]);
        x = r.0;
        shape = r.1;
    }
    ScalarField::new(grid.clone(), x, "interpolant_adjoint")
}

/// Separable analysis with per-axis tables `[m−1][i]`.
fn analyze_with(
    f: &ScalarField,
    basis: &EigenBasis,
    table: impl Fn(usize, usize, &[f64]) -> Vec<f64>,
) -> Result<ModeCoefficients> {
    if basis.is_empty() {
        return Err(Error::InvalidArgument("empty basis".into()));
    }
    if f.grid.dim() != basis.dim() {
        return Err(Error::InvalidArgument("field and basis dimensions differ".into()));
    }
    let d = basis.dim();
    let mut mx = [1usize; 3];
    for m in &basis.modes {
        for a in 0..d {
            mx[a] = mx[a].max(m[a]);
        }
    }
    let mut x = f.values.clone();
    let mut shape = f.grid.shape3();
    for a in 0..d {
        let xs = axis_coords(&f.grid, a);
        let tab = table(a, mx[a], &xs);
        let r = contract(&x, shape, a, &tab, mx[a]);
        x = r.0;
        shape = r.1;
    }
    let values = basis
        .modes
        .iter()
        .map(|m| {
            let k = if d == 3 { m[2] - 1 } else { 0 };
            x[((m[0] - 1) * shape[1] + m[1] - 1) * shape[2] + k]
        })
        .collect();
    ModeCoefficients::new(basis.clone(), values)
}

/// `∫ (p + q t) sin(k t) dt` over `[t0, t1]`.
fn linear_sine(p: f64, q: f64, k: f64, t0: f64, t1: f64) -> f64 {
    let prim = |t: f64| -(p + q * t) * (k * t).cos() / k + q * (k * t).sin() / (k * k);
    prim(t1) - prim(t0)
}

/// `√(2/L) ∫ φ_i(x) sin(mπ(x − lo)/L) dx` over the box, `[m−1][i]`, for the
/// hat functions of a uniform axis `xs`.
fn hat_table(lo: f64, l: f64, m_max: usize, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h = if n > 1 { xs[1] - xs[0] } else { 0.0 };
    let s = (2.0 / l).sqrt();
    let mut t = Vec::with_capacity(m_max * n);
    for m in 1..=m_max {
        let k = m as f64 * PI / l;
        for i in 0..n {
            let ti = xs[i] - lo;
            let mut v = 0.0;
            if i > 0 {
                // rising half on [t_i − h, t_i]
                let (a, b) = ((ti - h).max(0.0), ti.min(l));
                if b > a {
                    v += linear_sine(-(ti - h) / h, 1.0 / h, k, a, b);
                }
            }
            if i + 1 < n {
                let (a, b) = (ti.max(0.0), (ti + h).min(l));
                if b > a {
                    v += linear_sine((ti + h) / h, -1.0 / h, k, a, b);
                }
            }
            t.push(s * v);
        }
    }
    t
}

#[derive(Debug, Serialize, Deserialize)]
struct CoeffHeader {
    basis: EigenBasis,
    lambda_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn encode_coefficients(c: &ModeCoefficients, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let h = CoeffHeader {
        basis: c.basis.clone(),
        lambda_max: c.lambda_max,
        tail_ratio: c.tail_ratio,
        provenance: prov.cloned(),
    };
    encode_container(COEFF_MAGIC, &h, &c.values)
}

pub fn decode_coefficients(bytes: &[u8]) -> Result<ModeCoefficients> {
    let (h, values): (CoeffHeader, Vec<f64>) = decode_container(bytes, COEFF_MAGIC)?;
    let basis = EigenBasis::new(h.basis.lo, h.basis.hi, h.basis.c, h.basis.modes)?;
    if values.len() != basis.len() {
        return Err(Error::Truncated { expected: basis.len(), found: values.len() });
    }
    let mut c = ModeCoefficients::new(basis, values)?;
    c.lambda_max = h.lambda_max;
    c.tail_ratio = h.tail_ratio;
    Ok(c)
}

pub fn write_coefficients(c: &ModeCoefficients, path: &Path, prov: Option<&Provenance>) -> Result<()> {
    std::fs::write(path, encode_coefficients(c, prov)?)?;
    Ok(())
}

pub fn read_coefficients(path: &Path) -> Result<ModeCoefficients> {
    decode_coefficients(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::ObservationSurface;

    fn unit_box(d: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; d], vec![1.0, 0.5, 1.5][..d].to_vec())
    }

    fn face_sinogram(basis: &EigenBasis, s: &ObservationSurface, m: &[usize], only_face: Option<u8>) -> Sinogram {
        let v: Vec<f64> = (0..s.len())
            .map(|i| {
                if only_face.is_some_and(|f| f != s.faces[i]) {
                    0.0
                } else {
                    basis.dpsi_dn(m, &s.points[i], s.faces[i])
                }
            })
            .collect();
        Sinogram::new(s.clone(), 0.1, 1, v, SinogramKind::Pressure, None).unwrap()
    }

    #[test]
    fn zero_data_project_to_zero() {
        let (lo, hi) = unit_box(3);
        let grid = GridSpec::new(vec![9, 7, 11], vec![0.25, 0.25, 0.25], lo.clone()).unwrap();
        let s = ObservationSurface::cube_on_grid(&grid).unwrap();
        let b = EigenBasis::for_surface(&s, 1.0, None).unwrap();
        assert!(!b.is_empty());
        let g = Sinogram::zeros(s, 0.1, 5, SinogramKind::Pressure, None);
        assert!(project_boundary_data(&g, &b).unwrap().values.iter().all(|v| *v == 0.0));
        let _ = hi;
    }

    #[test]
    fn single_face_integral_matches_closed_form() {
        // ∫_face (∂_n ψ_m)² = (2/L_a)(m_a π/L_a)² since the tangential
        // factors are normalized and the lattice sums of sin² are exact.
        for d in [2, 3] {
            let (lo, hi) = unit_box(d);
            let n: Vec<usize> = vec![17, 13, 21][..d].to_vec();
            let spacing: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a]) / (n[a] - 1) as f64).collect();
            let grid = GridSpec::new(n.clone(), spacing, lo.clone()).unwrap();
            let s = ObservationSurface::cube_on_grid(&grid).unwrap();
            let m: Vec<usize> = vec![3, 2, 4][..d].to_vec();
            let b = EigenBasis::new(lo.clone(), hi.clone(), 1.0, vec![m.clone()]).unwrap();
            for face in 0..(2 * d) as u8 {
                let g = face_sinogram(&b, &s, &m, Some(face));
                let gm = project_boundary_data(&g, &b).unwrap().values[0];
                let a = (face / 2) as usize;
                let l = hi[a] - lo[a];
                let exact = 2.0 / l * (m[a] as f64 * PI / l).powi(2);
                assert!((gm - exact).abs() < 1e-10 * exact, "d={d} face={face}: {gm} vs {exact}");
                let direct = project_boundary_data_direct(&g, &b).unwrap().values[0];
                assert!((direct - exact).abs() < 1e-10 * exact);
            }
        }
    }

    #[test]
    fn modes_with_disjoint_patterns_are_orthogonal() {
        let (lo, hi) = unit_box(3);
        let n = vec![17, 13, 21];
        let spacing: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]) / (n[a] - 1) as f64).collect();
        let s = ObservationSurface::cube_on_grid(&GridSpec::new(n, spacing, lo.clone()).unwrap()).unwrap();
        let m = vec![2, 3, 1];
        let others = vec![vec![1, 1, 2], vec![3, 2, 4], vec![5, 4, 3]];
        let mut modes = vec![m.clone()];
        modes.extend(others);
        let b = EigenBasis::new(lo, hi, 1.0, modes).unwrap();
        let g = face_sinogram(&b, &s, &m, None);
        let gk = project_boundary_data(&g, &b).unwrap();
        assert!(gk.values[0] > 0.0);
        for k in 1..4 {
            assert!(gk.values[k].abs() < 1e-10 * gk.values[0], "mode {:?}: {}", b.modes[k], gk.values[k]);
        }
    }

    #[test]
    fn aliasing_modes_rejected() {
        let grid = GridSpec::cube(2, 9, 0.0, 1.0).unwrap();
        let s = ObservationSurface::cube_on_grid(&grid).unwrap();
        let b = EigenBasis::new(vec![0.0, 0.0], vec![1.0, 1.0], 1.0, vec![vec![1, 5]]).unwrap();
        let g = Sinogram::zeros(s, 0.1, 3, SinogramKind::Pressure, None);
        assert!(project_boundary_data(&g, &b).is_err());
    }

    #[test]
    fn formula_c_on_cosine_series() {
        // −(c²/λ)∫₀^T sin(λt)cos(λt)dt = −c²(1 − cos 2λT)/(4λ²)
        let b = EigenBasis::new(vec![0.0, 0.0], vec![1.0, 2.0], 1.5, vec![vec![1, 1], vec![2, 3]]).unwrap();
        let (t_max, nt) = (2.3, 4001);
        let dt = t_max / (nt - 1) as f64;
        let mut v = Vec::new();
        for m in &b.modes {
            let lam = b.eigenvalue(m);
            v.extend((0..nt).map(|j| (lam * j as f64 * dt).cos()));
        }
        let gk = ModeSeries { dt, n_times: nt, values: v };
        let f = coefficients_from_gk(&gk, &b, CoefficientFormula::C).unwrap();
        for (k, m) in b.modes.iter().enumerate() {
            let lam = b.eigenvalue(m);
            let exact = -2.25 * (1.0 - (2.0 * lam * t_max).cos()) / (4.0 * lam * lam);
            assert!((f.values[k] - exact).abs() < 1e-4 * exact.abs().max(1e-3), "{} vs {exact}", f.values[k]);
        }
        let zero = ModeSeries { dt, n_times: nt, values: vec![0.0; 2 * nt] };
        for form in [CoefficientFormula::A, CoefficientFormula::B, CoefficientFormula::C] {
            assert!(coefficients_from_gk(&zero, &b, form).unwrap().values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn formulas_agree_on_decaying_series() {
        let b = EigenBasis::new(vec![0.0, 0.0], vec![1.0, 1.0], 1.0, vec![vec![1, 2], vec![3, 1]]).unwrap();
        let nt = 8001;
        let dt = 8.0 / (nt - 1) as f64;
        let mut v = Vec::new();
        for k in 0..2 {
            v.extend((0..nt).map(|j| {
                let t = j as f64 * dt;
                (t - 1.0 - 0.3 * k as f64) * (-(t - 1.0 - 0.3 * k as f64).powi(2) / 0.05).exp()
            }));
        }
        let gk = ModeSeries { dt, n_times: nt, values: v };
        let fa = coefficients_from_gk(&gk, &b, CoefficientFormula::A).unwrap();
        let fb = coefficients_from_gk(&gk, &b, CoefficientFormula::B).unwrap();
        let fc = coefficients_from_gk(&gk, &b, CoefficientFormula::C).unwrap();
        for k in 0..2 {
            // scale of the integrand before cancellation
            let lam = b.eigenvalue(&b.modes[k]);
            let scale = gk.series(k).iter().map(|v| v.abs()).sum::<f64>() * dt / lam;
            assert!((fa.values[k] - fc.values[k]).abs() < 1e-5 * scale);
            assert!((fb.values[k] - fc.values[k]).abs() < 1e-5 * scale);
        }
    }

    #[test]
    fn single_mode_reproduces_psi() {
        let b = EigenBasis::new(vec![0.0, -1.0, 0.5], vec![1.0, 1.0, 2.0], 1.0, vec![vec![2, 3, 1]]).unwrap();
        let c = ModeCoefficients::new(b.clone(), vec![1.0]).unwrap();
        let grid = GridSpec::new(vec![11, 13, 9], vec![0.1, 2.0 / 12.0, 1.5 / 8.0], vec![0.0, -1.0, 0.5]).unwrap();
        let f = synthesize_field(&c, &grid).unwrap();
        for k in 0..grid.len() {
            let x = grid.node_at(k);
            assert!((f.values[k] - b.psi(&b.modes[0], &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_transform_matches_direct_sum() {
        let lo = vec![-1.0, -1.0];
        let hi = vec![1.0, 1.0];
        let b = EigenBasis::isotropic(lo.clone(), hi.clone(), 1.0, 30.0, None).unwrap();
        let vals: Vec<f64> = (0..b.len()).map(|i| ((i * 37 % 17) as f64 - 8.0) / 8.0).collect();
        let c = ModeCoefficients::new(b, vals).unwrap();
        let grid = GridSpec::cube(2, 33, -1.0, 1.0).unwrap();
        let fast = synthesize_field(&c, &grid).unwrap();
        let slow = synthesize_direct(&c, &grid).unwrap();
        let diff = fast.values.iter().zip(&slow.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "max difference {diff}");
    }

    #[test]
    fn analysis_inverts_synthesis_on_lattice() {
        let b = EigenBasis::isotropic(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], 1.0, 20.0, None).unwrap();
        let vals: Vec<f64> = (0..b.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = ModeCoefficients::new(b.clone(), vals.clone()).unwrap();
        let grid = GridSpec::cube(3, 17, 0.0, 1.0).unwrap();
        let f = synthesize_field(&c, &grid).unwrap();
        let back = analyze_field(&f, &b).unwrap();
        for (x, y) in back.values.iter().zip(&vals) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolant_analysis_is_exact_for_piecewise_linear_data() {
        // the interpolant of x₁ + 2 on the box lattice is x₁ + 2 itself
        let b = EigenBasis::isotropic(vec![-1.0, 0.0], vec![1.0, 1.5], 1.0, 40.0, None).unwrap();
        let grid = GridSpec::new(vec![9, 7], vec![0.25, 0.25], vec![-1.0, 0.0]).unwrap();
        let f = ScalarField::from_fn(grid, "f", |p| p[0] + 2.0);
        let got = analyze_interpolant(&f, &b).unwrap();
        let l = b.lengths();
        for (m, v) in b.modes.iter().zip(&got.values) {
            let k0 = m[0] as f64 * PI / l[0];
            let k1 = m[1] as f64 * PI / l[1];
            // ∫(t − 1 + 2) sin(k t) over [0, 2], then ∫ sin over [0, 1.5]
            let ix = linear_sine(1.0, 1.0, k0, 0.0, l[0]);
            let iy = (1.0 - (k1 * l[1]).cos()) / k1;
            let exact = (2.0 / l[0]).sqrt() * (2.0 / l[1]).sqrt() * ix * iy;
            assert!((v - exact).abs() < 1e-12, "{m:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn interpolant_adjoint_is_the_transpose() {
        let b = EigenBasis::isotropic(vec![0.0, 0.0], vec![1.0, 1.0], 1.0, 60.0, None).unwrap();
        let grid = GridSpec::cube(2, 13, 0.0, 1.0).unwrap();
        let f = ScalarField::from_fn(grid.clone(), "f", |p| (3.0 * p[0]).cos() + p[1]);
        let c = ModeCoefficients::new(b.clone(), (0..b.len()).map(|i| ((i * 5 % 7) as f64) - 3.0).collect()).unwrap();
        let lhs: f64 = analyze_interpolant(&f, &b).unwrap().values.iter().zip(&c.values).map(|(a, b)| a * b).sum();
        let rhs: f64 = interpolant_adjoint(&c, &grid).unwrap().values.iter().zip(&f.values).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn coefficient_file_round_trip() {
        let b = EigenBasis::isotropic(vec![0.0, 0.0], vec![1.0, 2.0], 1.0, 12.0, None).unwrap();
        let c = ModeCoefficients::new(b.clone(), (0..b.len()).map(|i| i as f64 / 3.0).collect()).unwrap();
        let bytes = encode_coefficients(&c, None).unwrap();
        assert_eq!(decode_coefficients(&bytes).unwrap(), c);
        assert!(decode_coefficients(&bytes[..bytes.len() - 8]).is_err());
    }
}
