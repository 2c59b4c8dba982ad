//! Forward data generation: the free-space wave solver, the spherical
//! integral transform, and conversions between the two data kinds for
//! constant sound speed in 3D.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dist, GridSpec, Point, ScalarField};
use crate::quadrature::gauss_legendre;
use crate::sinogram::{Sinogram, SinogramKind};
use crate::surface::ObservationSurface;
use crate::pml::{Layer, PmlSolver};
use crate::wave::{box_runs, Stencil};

/// Courant number bound `c·dt/h ≤ CFL_LIMIT` enforced by every solver.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    /// Width of the absorbing layer in cells.
    pub sponge_cells: usize,
    /// Peak damping rate of the layer; `None` picks one from its width.
    pub sponge_strength: Option<f64>,
    /// Free cells between the observation surface and the damping layer.
    pub margin_cells: usize,
    /// Reject sources that reach the observation surface.
    pub check_support: bool,
    /// Record the staggered energy of the whole lattice at every step.
    pub record_energy: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            sponge_cells: 20,
            sponge_strength: None,
            margin_cells: 4,
            check_support: true,
            record_energy: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub sinogram: Sinogram,
    /// `p(·, T)` restricted to the input grid.
    pub final_field: ScalarField,
    /// Energy per step when requested.
    pub energy: Vec<f64>,
}

/// Largest stable time step for the given lattice and speed.
pub fn max_stable_dt(grid: &GridSpec, c_max: f64) -> f64 {
    CFL_LIMIT * grid.min_spacing() / c_max
}

pub(crate) fn check_speed(c: &ScalarField) -> Result<(f64, f64)> {
    let (lo, hi) = (c.min_value(), c.max_value());
    if !(lo > 0.0) || !hi.is_finite() {
        return Err(Error::SoundSpeed(format!("sound speed must be positive, min is {lo}")));
    }
    Ok((lo, hi))
}

pub(crate) fn check_cfl(dt: f64, grid: &GridSpec, c_max: f64) -> Result<()> {
    let limit = max_stable_dt(grid, c_max);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

/// Every node where `f` is nonzero must lie strictly inside the surface.
pub fn check_support_inside(f: &ScalarField, surface: &ObservationSurface) -> Result<()> {
    for (i, v) in f.values.iter().enumerate() {
        if *v != 0.0 {
            let p = f.grid.node_at(i);
            if !surface.contains(&p, 0.0) {
                return Err(Error::Support(format!("source is nonzero at {p:?}, on or outside the observation surface")));
            }
        }
    }
    Ok(())
}

/// Multilinear interpolation stencil of a point on a lattice.
#[derive(Debug, Clone)]
pub(crate) struct Probe {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub n: usize,
}

impl Probe {
    pub fn new(grid: &GridSpec, p: &Point) -> Option<Probe> {
        let d = grid.dim();
        let o = grid.origin3();
        let h = grid.spacing3();
        let s = grid.shape3();
        let st = grid.strides3();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            let u = (p[a] - o[a]) / h[a];
            if !(u >= 0.0 && u <= (s[a] - 1) as f64) {
                return None;
            }
            let i = (u.floor() as usize).min(s[a] - 2);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let n = 1usize << d;
        let mut idx = [0usize; 8];
        let mut w = [0.0; 8];
        for corner in 0..n {
            let mut k = 0usize;
            let mut wt = 1.0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                k += (base[a] + bit) * st[a];
                wt *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            idx[corner] = k;
            w[corner] = wt;
        }
        Some(Probe { idx, w, n })
    }

    pub fn read(&self, v: &[f64]) -> f64 {
        (0..self.n).map(|k| self.w[k] * v[self.idx[k]]).sum()
    }
}

/// Pad `grid` so it holds the surface plus margin and damping layer.
fn extended_grid(grid: &GridSpec, surface: &ObservationSurface, opts: &ForwardOptions) -> (GridSpec, usize) {
    let (lo, hi) = grid.bounds();
    let mut need = 0usize;
    for p in &surface.points {
        for a in 0..grid.dim() {
            let excess = (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0);
            need = need.max((excess / grid.spacing[a] - 1e-9).ceil() as usize);
        }
    }
    let pad = need + opts.margin_cells + opts.sponge_cells + 1;
    (grid.padded(pad), pad)
}

/// Value of a field at the nearest node, clamped to its grid.
fn clamped_nearest(f: &ScalarField, p: &Point) -> f64 {
    let g = &f.grid;
    let o = g.origin3();
    let h = g.spacing3();
    let s = g.shape3();
    let mut idx = [0usize; 3];
    for a in 0..g.dim() {
        let u = ((p[a] - o[a]) / h[a]).round();
        idx[a] = u.clamp(0.0, (s[a] - 1) as f64) as usize;
    }
    f.at(idx)
}

pub fn solve_wave_forward(
    f: &ScalarField,
    c: &ScalarField,
    surface: &ObservationSurface,
    t_final: f64,
    dt: f64,
) -> Result<Sinogram> {
    Ok(solve_wave_forward_with(f, c, surface, t_final, dt, &ForwardOptions::default())?.sinogram)
}

/// Cauchy problem `p_tt = c²Δp`, `p(0) = f`, `p_t(0) = 0` in free space,
/// sampled at the detectors every `dt` until `t_final` is covered.
pub fn solve_wave_forward_with(
    f: &ScalarField,
    c: &ScalarField,
    surface: &ObservationSurface,
    t_final: f64,
    dt: f64,
    opts: &ForwardOptions,
) -> Result<ForwardOutput> {
    f.grid.validate()?;
    if !f.grid.same_lattice(&c.grid) {
        return Err(Error::InvalidField("source and sound speed must share a grid".into()));
    }
    if surface.dim != f.grid.dim() {
        return Err(Error::Surface(format!("{}D surface for a {}D grid", surface.dim, f.grid.dim())));
    }
    let (_, c_max) = check_speed(c)?;
    check_cfl(dt, &f.grid, c_max)?;
    if !(t_final > 0.0) {
        return Err(Error::InvalidArgument(format!("final time {t_final} must be positive")));
    }
    if opts.check_support {
        check_support_inside(f, surface)?;
    }

    let (ext, pad) = extended_grid(&f.grid, surface, opts);
    let n = ext.len();
    let dim = ext.dim();
    let shape = ext.shape3();
    let strides = ext.strides3();
    let h = ext.spacing3();
    let mut inv_h2 = [0.0; 3];
    for a in 0..dim {
        inv_h2[a] = 1.0 / (h[a] * h[a]);
    }

    let mut p0 = vec![0.0; n];
    let mut c2dt2 = vec![0.0; n];
    let fs = f.grid.shape3();
    for i in 0..n {
        let idx = ext.multi_index(i);
        let p = ext.node(idx);
        let cv = clamped_nearest(c, &p);
        c2dt2[i] = (cv * dt).powi(2);
        let inside = (0..dim).all(|a| idx[a] >= pad && idx[a] < pad + fs[a]);
        if inside {
            let mut j = [0usize; 3];
            for a in 0..dim {
                j[a] = idx[a] - pad;
            }
            p0[i] = f.at(j);
        }
    }

    // Quadratic profile; the default peak targets a normal-incidence
    // reflection of 1e-6 for the layer width.
    let w = opts.sponge_cells;
    let sigma_max = opts
        .sponge_strength
        .unwrap_or(3.0 * c_max * (1.0e6f64).ln() / (2.0 * w.max(1) as f64 * ext.min_spacing()));
    let energy_stencil = opts.record_energy.then(|| Stencil {
        shape,
        strides,
        axes: dim,
        inv_h2,
        c2dt2: c2dt2.clone(),
        damp: None,
        runs: box_runs(shape, dim, 1),
    });
    let c2: Vec<f64> = c2dt2.iter().map(|v| v / (dt * dt)).collect();
    drop(c2dt2);
    let mut prev_copy = opts.record_energy.then(|| p0.clone());
    let layer = Layer { cells: w, sigma_max };

    let probes: Vec<Probe> = surface
        .points
        .iter()
        .map(|p| Probe::new(&ext, p).expect("extended grid holds every detector"))
        .collect();

    let n_times = (t_final / dt - 1e-9).ceil() as usize + 1;
    let nd = probes.len();
    let mut traces = vec![0.0; nd * n_times];
    let record = |traces: &mut [f64], j: usize, field: &[f64]| {
        for (i, pr) in probes.iter().enumerate() {
            traces[i * n_times + j] = pr.read(field);
        }
    };

    record(&mut traces, 0, &p0);
    let initial = (n_times == 1).then(|| p0.clone());
    let mut energy = Vec::new();
    let mut solver = PmlSolver::new(shape, dim, h, dt, c2, p0, &layer);
    let mut note_energy = |prev: &mut Option<Vec<f64>>, cur: &[f64]| {
        if let (Some(st), Some(pv)) = (&energy_stencil, prev.as_mut()) {
            energy.push(st.energy(pv, cur));
            pv.copy_from_slice(cur);
        }
    };
    if n_times > 1 {
        record(&mut traces, 1, &solver.p);
        note_energy(&mut prev_copy, &solver.p);
    }
    for j in 2..n_times {
        solver.step();
        record(&mut traces, j, &solver.p);
        note_energy(&mut prev_copy, &solver.p);
    }
    let last = initial.unwrap_or(solver.p);

    let mut fin = ScalarField::zeros(f.grid.clone(), "p_final");
    for (k, v) in fin.values.iter_mut().enumerate() {
        let idx = f.grid.multi_index(k);
        let mut e = [0usize; 3];
        for a in 0..dim {
            e[a] = idx[a] + pad;
        }
        *v = last[ext.flat_index(e)];
    }

    let (c_lo, c_hi) = (c.min_value(), c.max_value());
    let c_const = (c_hi - c_lo <= 1e-14 * c_hi).then_some(c_hi);
    let sinogram = Sinogram::new(surface.clone(), dt, n_times, traces, SinogramKind::Pressure, c_const)?;
    Ok(ForwardOutput { sinogram, final_field: fin, energy })
}

#[derive(Debug, Clone)]
pub struct MeanOptions {
    /// Target spacing of quadrature nodes on each sphere, in grid cells.
    pub angular_step: f64,
}

impl Default for MeanOptions {
    fn default() -> Self {
        MeanOptions { angular_step: 1.0 }
    }
}

/// Bounding sphere (center, radius) of where the multilinear interpolant
/// of `f` can be nonzero.
fn support_ball(f: &ScalarField) -> Option<(Point, f64)> {
    let (lo, hi) = f.support_bounds(0.0)?;
    let d = f.grid.dim();
    let mut c = [0.0; 3];
    for a in 0..d {
        c[a] = 0.5 * (lo[a] + hi[a]);
    }
    let mut r: f64 = 0.0;
    for (i, v) in f.values.iter().enumerate() {
        if *v != 0.0 {
            r = r.max(dist(&f.grid.node_at(i), &c));
        }
    }
    let cell = f.grid.spacing.iter().map(|h| h * h).sum::<f64>().sqrt();
    Some((c, r + cell))
}

/// Nodes and weights on `[-1, 1]`.
type Rule = Arc<(Vec<f64>, Vec<f64>)>;
/// `(sin φ, cos φ)` at equispaced, half-step offset angles.
type Ring = Arc<Vec<(f64, f64)>>;

/// Gauss-Legendre rules and ring angles shared across spheres, built on
/// first use.
#[derive(Default)]
struct RuleCache {
    gauss: Mutex<HashMap<usize, Rule>>,
    rings: Mutex<HashMap<usize, Ring>>,
}

impl RuleCache {
    fn gauss(&self, n: usize) -> Rule {
        let mut m = self.gauss.lock().expect("rule cache poisoned");
        m.entry(n).or_insert_with(|| Arc::new(gauss_legendre(n))).clone()
    }

    fn ring(&self, n: usize) -> Ring {
        let mut m = self.rings.lock().expect("rule cache poisoned");
        m.entry(n)
            .or_insert_with(|| {
                let d = 2.0 * PI / n as f64;
                Arc::new((0..n).map(|k| ((k as f64 + 0.5) * d).sin_cos()).collect())
            })
            .clone()
    }
}

fn orthonormal_frame(u: &Point) -> (Point, Point) {
    let a = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = a[0] * u[0] + a[1] * u[1] + a[2] * u[2];
    let mut e1 = [a[0] - dot * u[0], a[1] - dot * u[1], a[2] - dot * u[2]];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    for x in &mut e1 {
        *x /= n1;
    }
    let e2 = [u[1] * e1[2] - u[2] * e1[1], u[2] * e1[0] - u[0] * e1[2], u[0] * e1[1] - u[1] * e1[0]];
    (e1, e2)
}

/// Integral of `f` over one sphere (circle in 2D) of radius `r` about `y`,
/// restricted to the cap that can meet the support ball `(sc, rho)`.
fn sphere_integral(f: &ScalarField, y: &Point, r: f64, sc: &Point, rho: f64, step: f64, rules: &RuleCache) -> f64 {
    let dim = f.grid.dim();
    let d = dist(y, sc);
    if r <= 0.0 || r < d - rho || r > d + rho {
        return 0.0;
    }
    let cmin = if d <= 1e-14 * rho.max(1.0) {
        -1.0
    } else {
        ((r * r + d * d - rho * rho) / (2.0 * r * d)).clamp(-1.0, 1.0)
    };
    let u = if d > 0.0 {
        [(sc[0] - y[0]) / d, (sc[1] - y[1]) / d, (sc[2] - y[2]) / d]
    } else {
        [0.0, 0.0, 1.0]
    };
    let theta_max = cmin.acos();
    let h = f.grid.min_spacing() * step;
    if dim == 2 {
        let v = [-u[1], u[0], 0.0];
        let at = |th: f64| {
            let (st, ct) = th.sin_cos();
            [y[0] + r * (ct * u[0] + st * v[0]), y[1] + r * (ct * u[1] + st * v[1]), 0.0]
        };
        // the interpolant jumps to zero where the arc leaves the grid, so
        // each piece inside gets its own rule
        let (lo, hi) = f.grid.bounds();
        let mut cuts = vec![-theta_max, theta_max];
        for a in 0..2 {
            let (ca, cb) = (r * u[a], r * v[a]);
            let rr = ca.hypot(cb);
            for wall in [lo[a], hi[a]] {
                let q = (wall - y[a]) / rr;
                if rr > 0.0 && q.abs() <= 1.0 {
                    let phi = cb.atan2(ca);
                    for t in [phi + q.acos(), phi - q.acos()] {
                        let t = (t + PI).rem_euclid(2.0 * PI) - PI;
                        if t > -theta_max && t < theta_max {
                            cuts.push(t);
                        }
                    }
                }
            }
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        let tol = 1e-12 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let mut s = 0.0;
        for piece in cuts.windows(2) {
            let (t0, t1) = (piece[0], piece[1]);
            let mid = at(0.5 * (t0 + t1));
            if t1 - t0 <= 0.0 || (0..2).any(|a| mid[a] < lo[a] - tol || mid[a] > hi[a] + tol) {
                continue;
            }
            let n = ((r * (t1 - t0) / h).ceil() as usize).max(4);
            let rule = rules.gauss(n);
            let half = 0.5 * (t1 - t0);
            s += rule.0.iter().zip(&rule.1).map(|(xi, wi)| wi * f.sample(at(t0 + half * (xi + 1.0)))).sum::<f64>() * half;
        }
        s * r
    } else {
        let (e1, e2) = orthonormal_frame(&u);
        let n_th = ((r * theta_max / h).ceil() as usize).max(6);
        let ring = 2.0 * PI * r * theta_max.sin().max(if theta_max > PI / 2.0 { 1.0 } else { 0.0 });
        let n_ph = ((ring / h).ceil() as usize).max(8);
        let rule = rules.gauss(n_th);
        let (x, w) = (&rule.0, &rule.1);
        let ring = rules.ring(n_ph);
        let dphi = 2.0 * PI / n_ph as f64;
        let half = 0.5 * (1.0 - cmin);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            // cos θ on [cmin, 1]
            let ct = cmin + half * (xi + 1.0);
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let mut ring_sum = 0.0;
            for &(sp, cp) in ring.iter() {
                let dir = [
                    ct * u[0] + st * (cp * e1[0] + sp * e2[0]),
                    ct * u[1] + st * (cp * e1[1] + sp * e2[1]),
                    ct * u[2] + st * (cp * e1[2] + sp * e2[2]),
                ];
                ring_sum += f.sample([y[0] + r * dir[0], y[1] + r * dir[1], y[2] + r * dir[2]]);
            }
            s += wi * half * ring_sum * dphi;
        }
        s * r * r
    }
}

/// Surface integrals of `f` over spheres (circles in 2D) of the given radii
/// about each center. Row-major `[center][radius]`.
pub fn spherical_integrals(f: &ScalarField, centers: &[Point], radii: &[f64], opts: &MeanOptions) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("empty radius list".into()));
    }
    if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument("radii must be finite and non-negative".into()));
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("radii must be ascending".into()));
    }
    if let Some(i) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let nr = radii.len();
    let Some((sc, rho)) = support_ball(f) else {
        return Ok(vec![0.0; centers.len() * nr]);
    };
    let rules = RuleCache::default();
    let rows: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|y| radii.iter().map(|&r| sphere_integral(f, y, r, &sc, rho, opts.angular_step, &rules)).collect())
        .collect();
    Ok(rows.concat())
}

/// Spherical integrals sampled like a sinogram: radii `c·j·dt`.
pub fn spherical_mean_transform(
    f: &ScalarField,
    surface: &ObservationSurface,
    c: f64,
    dt: f64,
    n_times: usize,
) -> Result<Sinogram> {
    spherical_mean_transform_with(f, surface, c, dt, n_times, &MeanOptions::default())
}

pub fn spherical_mean_transform_with(
    f: &ScalarField,
    surface: &ObservationSurface,
    c: f64,
    dt: f64,
    n_times: usize,
    opts: &MeanOptions,
) -> Result<Sinogram> {
    if surface.dim != f.grid.dim() {
        return Err(Error::Surface(format!("{}D surface for a {}D field", surface.dim, f.grid.dim())));
    }
    if !(c > 0.0) {
        return Err(Error::SoundSpeed(format!("constant speed {c} must be positive")));
    }
    if n_times == 0 {
        return Err(Error::InvalidArgument("empty radius list".into()));
    }
    let radii: Vec<f64> = (0..n_times).map(|j| c * j as f64 * dt).collect();
    let values = spherical_integrals(f, &surface.points, &radii, opts)?;
    Sinogram::new(surface.clone(), dt, n_times, values, SinogramKind::SphericalIntegral, Some(c))
}

/// Convert mean-kind data to integral kind; integral data pass through.
pub fn to_integrals(g: &Sinogram) -> Result<Sinogram> {
    match g.kind {
        SinogramKind::SphericalIntegral => Ok(g.clone()),
        SinogramKind::SphericalMean => {
            let dr = g.dr()?;
            let area = |r: f64| if g.surface.dim == 3 { 4.0 * PI * r * r } else { 2.0 * PI * r };
            let mut v = g.values.clone();
            for i in 0..g.n_detectors() {
                for j in 0..g.n_times {
                    v[i * g.n_times + j] *= area(j as f64 * dr);
                }
            }
            Ok(g.with_values(v, SinogramKind::SphericalIntegral))
        }
        k => Err(Error::Sinogram(format!("expected spherical integrals or means, got {k:?}"))),
    }
}

/// Divide integral-kind data by the sphere area (zero at radius zero).
pub fn to_means(g: &Sinogram) -> Result<Sinogram> {
    let g = to_integrals(g)?;
    let dr = g.dr()?;
    let area = |r: f64| if g.surface.dim == 3 { 4.0 * PI * r * r } else { 2.0 * PI * r };
    let mut v = g.values.clone();
    for i in 0..g.n_detectors() {
        for j in 0..g.n_times {
            let a = area(j as f64 * dr);
            v[i * g.n_times + j] = if a > 0.0 { v[i * g.n_times + j] / a } else { 0.0 };
        }
    }
    Ok(g.with_values(v, SinogramKind::SphericalMean))
}

fn constant_speed_3d(g: &Sinogram, c: f64) -> Result<()> {
    if g.surface.dim != 3 {
        return Err(Error::Unsupported(
            "pressure/mean conversion needs the local 3D Kirchhoff formula; 2D data rejected".into(),
        ));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::SoundSpeed(format!("constant speed {c} must be positive")));
    }
    if let Some(c0) = g.sound_speed {
        if (c0 - c).abs() > 1e-12 * c {
            warn!("sinogram records sound speed {c0}, converting with {c}");
        }
    }
    Ok(())
}

/// `p(y, t) = ∂_t [ g(y, c t) / (4π c² t) ]` with centered differences in
/// time and one-sided differences at both ends.
pub fn pressure_from_means(means: &Sinogram, c: f64) -> Result<Sinogram> {
    constant_speed_3d(means, c)?;
    let g = to_integrals(&Sinogram { sound_speed: Some(c), ..means.clone() })?;
    let nt = g.n_times;
    let dt = g.dt;
    let mut out = vec![0.0; g.values.len()];
    let mut q = vec![0.0; nt];
    for i in 0..g.n_detectors() {
        let tr = g.trace(i);
        for j in 1..nt {
            let t = j as f64 * dt;
            q[j] = tr[j] / (4.0 * PI * c * c * t);
        }
        q[0] = 0.0;
        let o = &mut out[i * nt..(i + 1) * nt];
        if nt == 1 {
            continue;
        }
        o[0] = (q[1] - q[0]) / dt;
        for j in 1..nt - 1 {
            o[j] = (q[j + 1] - q[j - 1]) / (2.0 * dt);
        }
        o[nt - 1] = (q[nt - 1] - q[nt - 2]) / dt;
    }
    let mut s = g.with_values(out, SinogramKind::Pressure);
    s.sound_speed = Some(c);
    Ok(s)
}

/// Exact discrete inverse of [`pressure_from_means`] on all samples the
/// centered difference determines: `q_0 = 0`, `q_1 = dt·p_0`,
/// `q_{j+1} = q_{j−1} + 2 dt p_j`, then `g = 4π c² t q`.
pub fn means_from_pressure(pressure: &Sinogram, c: f64) -> Result<Sinogram> {
    constant_speed_3d(pressure, c)?;
    if pressure.kind != SinogramKind::Pressure {
        return Err(Error::Sinogram(format!("expected pressure data, got {:?}", pressure.kind)));
    }
    let nt = pressure.n_times;
    let dt = pressure.dt;
    let mut out = vec![0.0; pressure.values.len()];
    let mut q = vec![0.0; nt];
    for i in 0..pressure.n_detectors() {
        let p = pressure.trace(i);
        q[0] = 0.0;
        if nt > 1 {
            q[1] = dt * p[0];
        }
        for j in 1..nt.saturating_sub(1) {
            q[j + 1] = q[j - 1] + 2.0 * dt * p[j];
        }
        let o = &mut out[i * nt..(i + 1) * nt];
        for j in 0..nt {
            o[j] = 4.0 * PI * c * c * (j as f64 * dt) * q[j];
        }
    }
    let mut s = pressure.with_values(out, SinogramKind::SphericalIntegral);
    s.sound_speed = Some(c);
    Ok(s)
}
