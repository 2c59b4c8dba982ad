//! Acousto-electric tomography on a 2D rectangle: the conductivity equation
//! `∇·(σ∇u) = 0`, the interior functional `σ∇u₁·∇u₂`, and recovery of `σ`
//! from such maps by adjoint-state optimization.
//!
//! The discretization is node-based finite volumes. Each node owns the dual
//! cell around it; the flux through the face shared with a lattice neighbour
//! uses the harmonic mean of the two nodal conductivities. Boundary cells
//! are half (or quarter) cells.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::focusing::InteriorMap;
use crate::grid::{GridSpec, Point, ScalarField};
use crate::quadrature::trapezoid_weights;
use crate::series::{analyze_field, analyze_interpolant, interpolant_adjoint, synthesize_field, EigenBasis};

pub const FUNCTIONAL_TAG: &str = "sigma_grad_u1_dot_grad_u2";

/// Relative weight of the gradient penalty against the data.
pub const DEFAULT_BETA: f64 = 1e-4;

/// Boundary data for one conductivity solve, one value per boundary node in
/// flat-index order (see [`boundary_nodes`]).
#[derive(Debug, Clone, PartialEq)]
pub enum CurrentPattern {
    /// Prescribed potential.
    Dirichlet(Vec<f64>),
    /// Prescribed outward current density `σ ∂_n u`.
    Neumann(Vec<f64>),
}

impl CurrentPattern {
    pub fn dirichlet_from_fn(grid: &GridSpec, f: impl Fn(Point) -> f64) -> Self {
        CurrentPattern::Dirichlet(boundary_nodes(grid).iter().map(|&k| f(grid.node_at(k))).collect())
    }

    pub fn neumann_from_fn(grid: &GridSpec, f: impl Fn(Point) -> f64) -> Self {
        CurrentPattern::Neumann(boundary_nodes(grid).iter().map(|&k| f(grid.node_at(k))).collect())
    }

    fn values(&self) -> &[f64] {
        match self {
            CurrentPattern::Dirichlet(v) | CurrentPattern::Neumann(v) => v,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = boundary_nodes(grid).len();
        let v = self.values();
        if v.len() != n {
            return Err(Error::InvalidArgument(format!("{} boundary values for {n} boundary nodes", v.len())));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if let CurrentPattern::Neumann(j) = self {
            let w = boundary_weights(grid);
            let net: f64 = j.iter().zip(&w).map(|(a, b)| a * b).sum();
            let scale: f64 = j.iter().zip(&w).map(|(a, b)| (a * b).abs()).sum();
            if net.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument(format!("Neumann pattern carries net current {net:e}")));
            }
        }
        Ok(())
    }
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported("the conductivity solver is 2D only".into()));
    }
    if grid.shape.iter().any(|&n| n < 3) {
        return Err(Error::InvalidGrid("conductivity grids need at least 3 nodes per axis".into()));
    }
    Ok(())
}

fn on_boundary(grid: &GridSpec, k: usize) -> bool {
    let [i, j, _] = grid.multi_index(k);
    i == 0 || j == 0 || i + 1 == grid.shape[0] || j + 1 == grid.shape[1]
}

/// Flat indices of the boundary nodes, ascending.
pub fn boundary_nodes(grid: &GridSpec) -> Vec<usize> {
    (0..grid.len()).filter(|&k| on_boundary(grid, k)).collect()
}

/// Boundary length owned by each boundary node.
pub fn boundary_weights(grid: &GridSpec) -> Vec<f64> {
    let (n0, n1) = (grid.shape[0], grid.shape[1]);
    let (h0, h1) = (grid.spacing[0], grid.spacing[1]);
    boundary_nodes(grid)
        .into_iter()
        .map(|k| {
            let [i, j, _] = grid.multi_index(k);
            let along = |m: usize, n: usize, h: f64| if m == 0 || m + 1 == n { 0.5 * h } else { h };
            let mut w = 0.0;
            if i == 0 || i + 1 == n0 {
                w += along(j, n1, h1);
            }
            if j == 0 || j + 1 == n1 {
                w += along(i, n0, h0);
            }
            w
        })
        .collect()
}

struct Face {
    a: usize,
    b: usize,
    /// Face length over node distance.
    geom: f64,
}

/// Faces of the dual mesh.
fn faces(grid: &GridSpec) -> Vec<Face> {
    let (n0, n1) = (grid.shape[0], grid.shape[1]);
    let (h0, h1) = (grid.spacing[0], grid.spacing[1]);
    let edge = |m: usize, n: usize| if m == 0 || m + 1 == n { 0.5 } else { 1.0 };
    let mut out = Vec::with_capacity(2 * n0 * n1);
    for i in 0..n0 {
        for j in 0..n1 {
            let k = i * n1 + j;
            if i + 1 < n0 {
                out.push(Face { a: k, b: k + n1, geom: edge(j, n1) * h1 / h0 });
            }
            if j + 1 < n1 {
                out.push(Face { a: k, b: k + 1, geom: edge(i, n0) * h0 / h1 });
            }
        }
    }
    out
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// `∂ harmonic(a, b) / ∂a`.
fn harmonic_da(a: f64, b: f64) -> f64 {
    2.0 * b * b / ((a + b) * (a + b))
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative residual target of the conjugate-gradient solve.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 20_000 }
    }
}

/// Stiffness operator for one conductivity.
struct Stiffness<'a> {
    faces: &'a [Face],
    cond: Vec<f64>,
    /// Rows solved for; the rest are held fixed.
    free: Vec<bool>,
    diag: Vec<f64>,
    neumann: bool,
}

impl<'a> Stiffness<'a> {
    fn new(grid: &GridSpec, faces: &'a [Face], sigma: &[f64], neumann: bool) -> Self {
        let cond: Vec<f64> = faces.iter().map(|f| f.geom * harmonic(sigma[f.a], sigma[f.b])).collect();
        let free: Vec<bool> = (0..grid.len()).map(|k| neumann || !on_boundary(grid, k)).collect();
        let mut diag = vec![0.0; grid.len()];
        for (f, c) in faces.iter().zip(&cond) {
            diag[f.a] += c;
            diag[f.b] += c;
        }
        Stiffness { faces, cond, free, diag, neumann }
    }

    /// Full-lattice `A x`; fixed rows are not zeroed.
    fn apply_full(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (f, c) in self.faces.iter().zip(&self.cond) {
            let d = c * (x[f.a] - x[f.b]);
            out[f.a] += d;
            out[f.b] -= d;
        }
    }

    /// `A x` on free rows, with `x` taken as zero on fixed nodes.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.apply_full(x, out);
        for (o, f) in out.iter_mut().zip(&self.free) {
            if !f {
                *o = 0.0;
            }
        }
    }

    fn project(&self, v: &mut [f64]) {
        if self.neumann {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        }
    }

    /// Jacobi-preconditioned conjugate gradients on the free rows.
    fn solve(&self, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
        let n = b.len();
        let mut r: Vec<f64> = b.iter().zip(&self.free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
        self.project(&mut r);
        let b_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if b_norm == 0.0 {
            return Ok(x);
        }
        let precond = |r: &[f64], z: &mut [f64]| {
            for k in 0..n {
                z[k] = if self.free[k] { r[k] / self.diag[k] } else { 0.0 };
            }
        };
        let mut z = vec![0.0; n];
        precond(&r, &mut z);
        self.project(&mut z);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..opts.max_iter {
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            self.project(&mut r);
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= opts.tol * b_norm {
                self.project(&mut x);
                return Ok(x);
            }
            precond(&r, &mut z);
            self.project(&mut z);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        Err(Error::NoConvergence(format!(
            "relative residual {:.3e} after {} iterations (target {:.1e})",
            rn / b_norm,
            opts.max_iter,
            opts.tol
        )))
    }
}

fn check_sigma(sigma: &ScalarField) -> Result<()> {
    check_grid(&sigma.grid)?;
    if let Some(i) = sigma.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if let Some(i) = sigma.values.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidField(format!(
            "conductivity {} at flat index {i} is not positive",
            sigma.values[i]
        )));
    }
    Ok(())
}

fn solve_with(sigma: &ScalarField, pattern: &CurrentPattern, faces: &[Face], opts: &SolveOptions) -> Result<Vec<f64>> {
    let grid = &sigma.grid;
    let nodes = boundary_nodes(grid);
    match pattern {
        CurrentPattern::Dirichlet(g) => {
            let a = Stiffness::new(grid, faces, &sigma.values, false);
            let mut ub = vec![0.0; grid.len()];
            for (k, v) in nodes.iter().zip(g) {
                ub[*k] = *v;
            }
            let mut rhs = vec![0.0; grid.len()];
            a.apply_full(&ub, &mut rhs);
            rhs.iter_mut().for_each(|v| *v = -*v);
            let w = a.solve(&rhs, opts)?;
            Ok(ub.iter().zip(&w).map(|(a, b)| a + b).collect())
        }
        CurrentPattern::Neumann(j) => {
            let a = Stiffness::new(grid, faces, &sigma.values, true);
            let mut rhs = vec![0.0; grid.len()];
            for ((k, v), w) in nodes.iter().zip(j).zip(boundary_weights(grid)) {
                rhs[*k] = v * w;
            }
            a.solve(&rhs, opts)
        }
    }
}

/// Potential `u` with `∇·(σ∇u) = 0` and the given boundary data. Neumann
/// solutions are normalized to zero mean.
pub fn solve_conductivity(sigma: &ScalarField, pattern: &CurrentPattern) -> Result<ScalarField> {
    solve_conductivity_with(sigma, pattern, &SolveOptions::default())
}

pub fn solve_conductivity_with(sigma: &ScalarField, pattern: &CurrentPattern, opts: &SolveOptions) -> Result<ScalarField> {
    check_sigma(sigma)?;
    pattern.validate(&sigma.grid)?;
    let f = faces(&sigma.grid);
    let u = solve_with(sigma, pattern, &f, opts)?;
    ScalarField::new(sigma.grid.clone(), u, "potential")
}

/// Net current leaving each boundary node's cell, `−(A u)` on boundary rows.
pub fn boundary_currents(sigma: &ScalarField, u: &ScalarField) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    if !sigma.grid.same_lattice(&u.grid) {
        return Err(Error::InvalidGrid("conductivity and potential grids differ".into()));
    }
    let f = faces(&sigma.grid);
    let a = Stiffness::new(&sigma.grid, &f, &sigma.values, true);
    let mut out = vec![0.0; u.values.len()];
    a.apply_full(&u.values, &mut out);
    Ok(boundary_nodes(&sigma.grid).iter().map(|&k| out[k]).collect())
}

/// Three-point derivative weights at position `m` of an axis of length `n`:
/// centered inside, second-order one-sided at the ends.
fn diff_weights(m: usize, n: usize, h: f64) -> [(usize, f64); 3] {
    let s = 1.0 / (2.0 * h);
    if m == 0 {
        [(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
    } else if m + 1 == n {
        [(n - 3, s), (n - 2, -4.0 * s), (n - 1, 3.0 * s)]
    } else {
        [(m - 1, -s), (m, 0.0), (m + 1, s)]
    }
}

fn gradient(grid: &GridSpec, u: &[f64]) -> [Vec<f64>; 2] {
    let (n0, n1) = (grid.shape[0], grid.shape[1]);
    let mut g = [vec![0.0; u.len()], vec![0.0; u.len()]];
    for i in 0..n0 {
        for j in 0..n1 {
            let k = i * n1 + j;
            g[0][k] = diff_weights(i, n0, grid.spacing[0]).iter().map(|(m, w)| w * u[m * n1 + j]).sum();
            g[1][k] = diff_weights(j, n1, grid.spacing[1]).iter().map(|(m, w)| w * u[i * n1 + m]).sum();
        }
    }
    g
}

/// Adjoint of [`gradient`]: `Σ_a D_aᵀ q_a`.
fn gradient_transpose(grid: &GridSpec, q: &[Vec<f64>; 2]) -> Vec<f64> {
    let (n0, n1) = (grid.shape[0], grid.shape[1]);
    let mut out = vec![0.0; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let k = i * n1 + j;
            for (m, w) in diff_weights(i, n0, grid.spacing[0]) {
                out[m * n1 + j] += w * q[0][k];
            }
            for (m, w) in diff_weights(j, n1, grid.spacing[1]) {
                out[i * n1 + m] += w * q[1][k];
            }
        }
    }
    out
}

/// `W = σ ∇u₁·∇u₂` nodewise.
pub fn interior_functional(sigma: &ScalarField, u1: &ScalarField, u2: &ScalarField) -> Result<InteriorMap> {
    check_grid(&sigma.grid)?;
    if !sigma.grid.same_lattice(&u1.grid) || !sigma.grid.same_lattice(&u2.grid) {
        return Err(Error::InvalidGrid("σ, u₁ and u₂ must share one grid".into()));
    }
    let g1 = gradient(&sigma.grid, &u1.values);
    let g2 = gradient(&sigma.grid, &u2.values);
    let w = (0..sigma.values.len()).map(|k| sigma.values[k] * (g1[0][k] * g2[0][k] + g1[1][k] * g2[1][k])).collect();
    InteriorMap::new(ScalarField::new(sigma.grid.clone(), w, "interior_functional")?, FUNCTIONAL_TAG)
}

/// An observed interior map with the indices of the two patterns it pairs.
#[derive(Debug, Clone)]
pub struct ObservedMap {
    pub first: usize,
    pub second: usize,
    pub map: InteriorMap,
}

#[derive(Debug, Clone)]
pub struct AetOptions {
    /// Constant initial guess.
    pub sigma0: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Gradient-penalty weight; `None` means [`DEFAULT_BETA`] times the
    /// summed mean square of the observed maps.
    pub beta: Option<f64>,
    pub max_iter: usize,
    /// Stop once the projected gradient norm falls below this fraction of
    /// its initial value.
    pub grad_tol: f64,
    /// Compare maps after projecting onto this eigenbasis, matching the band
    /// limit of focused data. The projection integrates the interpolant
    /// exactly, as focusing does.
    pub band_limit: Option<EigenBasis>,
    pub solve: SolveOptions,
}

impl Default for AetOptions {
    fn default() -> Self {
        AetOptions {
            sigma0: 1.0,
            sigma_min: 0.05,
            sigma_max: 20.0,
            beta: None,
            max_iter: 300,
            grad_tol: 1e-6,
            band_limit: None,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AetReport {
    /// Objective at the start and after every accepted step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

/// The reduced objective `J(σ)` and its adjoint-state gradient.
pub struct AetProblem {
    grid: GridSpec,
    patterns: Vec<CurrentPattern>,
    maps: Vec<ObservedMap>,
    faces: Vec<Face>,
    weights: Vec<f64>,
    beta: f64,
    band_limit: Option<EigenBasis>,
    solve: SolveOptions,
}

impl AetProblem {
    pub fn new(grid: &GridSpec, patterns: Vec<CurrentPattern>, maps: Vec<ObservedMap>, opts: &AetOptions) -> Result<Self> {
        check_grid(grid)?;
        if patterns.len() < 2 {
            return Err(Error::InvalidArgument("at least two current patterns are needed".into()));
        }
        for p in &patterns {
            p.validate(grid)?;
        }
        if maps.is_empty() {
            return Err(Error::InvalidArgument("no interior maps given".into()));
        }
        for m in &maps {
            if m.first >= patterns.len() || m.second >= patterns.len() {
                return Err(Error::InvalidArgument(format!(
                    "map pairs patterns {} and {}, only {} exist",
                    m.first,
                    m.second,
                    patterns.len()
                )));
            }
            if !m.map.field.grid.same_lattice(grid) {
                return Err(Error::InvalidGrid("interior map grid differs from the conductivity grid".into()));
            }
        }
        let w0 = trapezoid_weights(grid.shape[0], grid.spacing[0]);
        let w1 = trapezoid_weights(grid.shape[1], grid.spacing[1]);
        let weights: Vec<f64> = (0..grid.len()).map(|k| w0[k / grid.shape[1]] * w1[k % grid.shape[1]]).collect();
        let area: f64 = weights.iter().sum();
        // default: 1e-4 times the summed mean square of the observed maps,
        // so the penalty keeps its relative weight whatever their scale
        let data: f64 = maps
            .iter()
            .map(|m| m.map.field.values.iter().zip(&weights).map(|(v, w)| w * v * v).sum::<f64>())
            .sum::<f64>()
            / area;
        let beta = opts.beta.unwrap_or(DEFAULT_BETA * data);
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("regularization weight {beta} must be non-negative")));
        }
        Ok(AetProblem {
            grid: grid.clone(),
            patterns,
            maps,
            faces: faces(grid),
            weights,
            beta,
            band_limit: opts.band_limit.clone(),
            solve: opts.solve.clone(),
        })
    }

    fn project(&self, v: Vec<f64>) -> Result<Vec<f64>> {
        match &self.band_limit {
            None => Ok(v),
            Some(b) => {
                let f = ScalarField { grid: self.grid.clone(), values: v, name: String::new() };
                Ok(synthesize_field(&analyze_interpolant(&f, b)?, &self.grid)?.values)
            }
        }
    }

    fn potentials(&self, sigma: &ScalarField) -> Result<Vec<Vec<f64>>> {
        self.patterns.par_iter().map(|p| solve_with(sigma, p, &self.faces, &self.solve)).collect()
    }

    fn cell(&self) -> f64 {
        self.grid.spacing[0] * self.grid.spacing[1]
    }

    fn regularization(&self, s: &[f64]) -> f64 {
        let v = self.cell();
        let h = &self.grid.spacing;
        let n1 = self.grid.shape[1];
        0.5 * self.beta
            * self
                .faces
                .iter()
                .map(|f| {
                    let hh = if f.b == f.a + n1 { h[0] } else { h[1] };
                    v * ((s[f.a] - s[f.b]) / hh).powi(2)
                })
                .sum::<f64>()
    }

    fn residuals(&self, sigma: &ScalarField, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let grads: Vec<[Vec<f64>; 2]> = u.iter().map(|x| gradient(&self.grid, x)).collect();
        self.maps
            .par_iter()
            .map(|m| {
                let (g1, g2) = (&grads[m.first], &grads[m.second]);
                let w: Vec<f64> =
                    (0..sigma.values.len()).map(|k| sigma.values[k] * (g1[0][k] * g2[0][k] + g1[1][k] * g2[1][k])).collect();
                let pw = self.project(w)?;
                Ok(pw.iter().zip(&m.map.field.values).map(|(a, b)| a - b).collect())
            })
            .collect()
    }

    fn misfit(&self, r: &[Vec<f64>]) -> f64 {
        0.5 * r.iter().map(|r| r.iter().zip(&self.weights).map(|(x, w)| w * x * x).sum::<f64>()).sum::<f64>()
    }

    fn check(&self, sigma: &ScalarField) -> Result<()> {
        check_sigma(sigma)?;
        if !sigma.grid.same_lattice(&self.grid) {
            return Err(Error::InvalidGrid("σ grid differs from the problem grid".into()));
        }
        Ok(())
    }

    pub fn objective(&self, sigma: &ScalarField) -> Result<f64> {
        self.check(sigma)?;
        let u = self.potentials(sigma)?;
        let r = self.residuals(sigma, &u)?;
        Ok(self.misfit(&r) + self.regularization(&sigma.values))
    }

    /// Objective and `∂J/∂σ` per node.
    pub fn gradient(&self, sigma: &ScalarField) -> Result<(f64, Vec<f64>)> {
        self.check(sigma)?;
        let n = self.grid.len();
        let s = &sigma.values;
        let u = self.potentials(sigma)?;
        let r = self.residuals(sigma, &u)?;
        let j = self.misfit(&r) + self.regularization(s);
        let grads: Vec<[Vec<f64>; 2]> = u.iter().map(|x| gradient(&self.grid, x)).collect();
        // ∂J/∂W for each map
        let rho: Vec<Vec<f64>> = r
            .into_par_iter()
            .map(|r| {
                match &self.band_limit {
                    None => Ok(r.iter().zip(&self.weights).map(|(x, w)| w * x).collect()),
                    // Pᵀ V r with P = Ψ Bᵀ: trapezoid analysis, then hat adjoint
                    Some(b) => {
                        let f = ScalarField { grid: self.grid.clone(), values: r, name: String::new() };
                        Ok(interpolant_adjoint(&analyze_field(&f, b)?, &self.grid)?.values)
                    }
                }
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; n];
        let mut du: Vec<[Vec<f64>; 2]> = (0..self.patterns.len()).map(|_| [vec![0.0; n], vec![0.0; n]]).collect();
        for (m, rho) in self.maps.iter().zip(&rho) {
            let (g1, g2) = (&grads[m.first], &grads[m.second]);
            for k in 0..n {
                grad[k] += rho[k] * (g1[0][k] * g2[0][k] + g1[1][k] * g2[1][k]);
                let q = rho[k] * s[k];
                for a in 0..2 {
                    du[m.first][a][k] += q * g2[a][k];
                    du[m.second][a][k] += q * g1[a][k];
                }
            }
        }
        // adjoint solves A λ = −∂J/∂u, then λᵀ (∂A/∂σ) u
        let contrib: Vec<Vec<f64>> = self
            .patterns
            .par_iter()
            .zip(&du)
            .zip(&u)
            .map(|((p, q), u)| {
                let neumann = matches!(p, CurrentPattern::Neumann(_));
                let a = Stiffness::new(&self.grid, &self.faces, s, neumann);
                let rhs: Vec<f64> = gradient_transpose(&self.grid, q).iter().map(|v| -v).collect();
                let lam = a.solve(&rhs, &self.solve)?;
                let mut g = vec![0.0; n];
                for f in &self.faces {
                    let t = f.geom * (lam[f.a] - lam[f.b]) * (u[f.a] - u[f.b]);
                    g[f.a] += t * harmonic_da(s[f.a], s[f.b]);
                    g[f.b] += t * harmonic_da(s[f.b], s[f.a]);
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        for c in contrib {
            for (g, v) in grad.iter_mut().zip(c) {
                *g += v;
            }
        }
        let v = self.cell();
        let n1 = self.grid.shape[1];
        for f in &self.faces {
            let hh = if f.b == f.a + n1 { self.grid.spacing[0] } else { self.grid.spacing[1] };
            let d = self.beta * v * (s[f.a] - s[f.b]) / (hh * hh);
            grad[f.a] += d;
            grad[f.b] -= d;
        }
        Ok((j, grad))
    }
}

fn clamp_field(grid: &GridSpec, v: Vec<f64>, lo: f64, hi: f64) -> ScalarField {
    ScalarField { grid: grid.clone(), values: v.into_iter().map(|x| x.clamp(lo, hi)).collect(), name: "sigma".into() }
}

/// Projected-gradient norm: components pushing against an active bound
/// do not count.
fn projected_norm(s: &[f64], g: &[f64], lo: f64, hi: f64) -> f64 {
    s.iter()
        .zip(g)
        .map(|(x, g)| if (*x <= lo && *g > 0.0) || (*x >= hi && *g < 0.0) { 0.0 } else { g * g })
        .sum::<f64>()
        .sqrt()
}

/// Recover `σ` from interior maps by projected gradient descent with
/// Barzilai-Borwein steps and Armijo backtracking.
pub fn reconstruct_sigma(
    grid: &GridSpec,
    patterns: Vec<CurrentPattern>,
    maps: Vec<ObservedMap>,
    opts: &AetOptions,
) -> Result<(ScalarField, AetReport)> {
    if !(opts.sigma_min > 0.0 && opts.sigma_min <= opts.sigma0 && opts.sigma0 <= opts.sigma_max) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < σ_min ≤ σ₀ ≤ σ_max, got {} / {} / {}",
            opts.sigma_min, opts.sigma0, opts.sigma_max
        )));
    }
    let problem = AetProblem::new(grid, patterns, maps, opts)?;
    let (lo, hi) = (opts.sigma_min, opts.sigma_max);
    let mut sigma = ScalarField::constant(grid.clone(), opts.sigma0, "sigma");
    let (mut j, mut g) = problem.gradient(&sigma)?;
    let mut report = AetReport { objective: vec![j], ..Default::default() };
    let g0 = projected_norm(&sigma.values, &g, lo, hi);
    if j == 0.0 || g0 == 0.0 {
        report.converged = true;
        return Ok((sigma, report));
    }
    let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = 0.1 * opts.sigma0 / g_inf;
    for it in 0..opts.max_iter {
        let mut t = step;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = sigma.values.iter().zip(&g).map(|(s, g)| s - t * g).collect();
            let cand = clamp_field(grid, trial, lo, hi);
            let decrease: f64 = sigma.values.iter().zip(&cand.values).zip(&g).map(|((s, c), g)| g * (s - c)).sum();
            let jc = problem.objective(&cand)?;
            if jc <= j - 1e-4 * decrease && jc <= j {
                accepted = Some((cand, jc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, _)) = accepted else {
            report.diagnostic = Some(format!("line search exhausted at iteration {it}; returning the best iterate"));
            break;
        };
        let (jn, gn) = problem.gradient(&cand)?;
        let sd: Vec<f64> = cand.values.iter().zip(&sigma.values).map(|(a, b)| a - b).collect();
        let yd: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ss: f64 = sd.iter().map(|v| v * v).sum();
        let sy: f64 = sd.iter().zip(&yd).map(|(a, b)| a * b).sum();
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        sigma = cand;
        j = jn;
        g = gn;
        report.objective.push(j);
        report.iterations = it + 1;
        log::debug!("aet iteration {}: objective {j:.6e}", it + 1);
        if projected_norm(&sigma.values, &g, lo, hi) <= opts.grad_tol * g0 {
            report.converged = true;
            break;
        }
    }
    Ok((sigma, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::cube(2, n, -1.0, 1.0).unwrap()
    }

    fn bump(g: &GridSpec) -> ScalarField {
        ScalarField::from_fn(g.clone(), "sigma", |p| {
            1.0 + (-((p[0] - 0.2).powi(2) + (p[1] + 0.1).powi(2)) / (2.0 * 0.25f64.powi(2))).exp()
        })
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn affine_potential_is_exact() {
        let g = grid(21);
        let sigma = ScalarField::constant(g.clone(), 1.0, "s");
        let f = |p: Point| 0.3 + 1.5 * p[0] - 0.7 * p[1];
        let u = solve_conductivity(&sigma, &CurrentPattern::dirichlet_from_fn(&g, f)).unwrap();
        let exact = ScalarField::from_fn(g, "u", f);
        assert!(max_diff(&u.values, &exact.values) < 1e-10);
    }

    #[test]
    fn neumann_recovers_affine_potential_up_to_a_constant() {
        let g = grid(25);
        let sigma = ScalarField::constant(g.clone(), 2.0, "s");
        // u = x₁: outward current σ ∂_n u is ±2 on the x₁ faces only; a
        // corner's cell boundary is half on each face
        let j = CurrentPattern::neumann_from_fn(&g, |p| {
            let side = if p[1].abs() >= 1.0 - 1e-12 { 1.0 } else { 2.0 };
            if p[0].abs() >= 1.0 - 1e-12 {
                side * p[0].signum()
            } else {
                0.0
            }
        });
        let u = solve_conductivity(&sigma, &j).unwrap();
        let exact = ScalarField::from_fn(g, "u", |p| p[0]);
        assert!(max_diff(&u.values, &exact.values) < 1e-8);
        assert!(u.values.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn net_boundary_flux_vanishes() {
        let g = grid(33);
        let sigma = bump(&g);
        let pat = CurrentPattern::dirichlet_from_fn(&g, |p| (2.0 * p[0]).sin() + p[1] * p[1]);
        let u = solve_conductivity(&sigma, &pat).unwrap();
        let j = boundary_currents(&sigma, &u).unwrap();
        let scale: f64 = j.iter().map(|v| v.abs()).sum();
        assert!(j.iter().sum::<f64>().abs() < 1e-9 * scale);
    }

    #[test]
    fn layered_medium_matches_series_resistors() {
        // interface halfway between two node columns
        let g = grid(32);
        let (s1, s2) = (1.0, 5.0);
        let sigma = ScalarField::from_fn(g.clone(), "s", |p| if p[0] < 0.0 { s1 } else { s2 });
        // continuous solution: piecewise linear, flux q continuous across x = 0
        let q = 1.0 / (1.0 / s1 + 1.0 / s2);
        let exact = |x: f64| if x < 0.0 { q * (x + 1.0) / s1 } else { 1.0 - q * (1.0 - x) / s2 };
        let pat = CurrentPattern::dirichlet_from_fn(&g, |p| exact(p[0]));
        // the oracle checks the discretization, so solve well past 1e-10
        let u = solve_conductivity_with(&sigma, &pat, &SolveOptions { tol: 1e-13, max_iter: 20_000 }).unwrap();
        let want = ScalarField::from_fn(g.clone(), "u", |p| exact(p[0]));
        assert!(max_diff(&u.values, &want.values) < 1e-10, "{}", max_diff(&u.values, &want.values));
        let j = boundary_currents(&sigma, &u).unwrap();
        let nodes = boundary_nodes(&g);
        let w = boundary_weights(&g);
        for ((k, j), w) in nodes.iter().zip(&j).zip(&w) {
            let p = g.node_at(*k);
            if p[0] >= 1.0 - 1e-12 && p[1].abs() < 1.0 - 1e-12 {
                assert!((j / w - q).abs() < 1e-10 * q, "{} vs {q}", j / w);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid(9);
        let mut sigma = ScalarField::constant(g.clone(), 1.0, "s");
        sigma.values[40] = 0.0;
        let pat = CurrentPattern::dirichlet_from_fn(&g, |p| p[0]);
        assert!(matches!(solve_conductivity(&sigma, &pat), Err(Error::InvalidField(_))));
        let ok = ScalarField::constant(g.clone(), 1.0, "s");
        let unbalanced = CurrentPattern::neumann_from_fn(&g, |_| 1.0);
        assert!(solve_conductivity(&ok, &unbalanced).is_err());
        let tight = SolveOptions { tol: 1e-10, max_iter: 2 };
        let hard = CurrentPattern::dirichlet_from_fn(&g, |p| (3.0 * p[0]).sin() * p[1]);
        assert!(matches!(solve_conductivity_with(&bump(&g), &hard, &tight), Err(Error::NoConvergence(_))));
    }

    #[test]
    fn functional_trivial_cases() {
        let g = grid(17);
        let x1 = ScalarField::from_fn(g.clone(), "u", |p| p[0]);
        let x2 = ScalarField::from_fn(g.clone(), "u", |p| p[1]);
        let one = ScalarField::constant(g.clone(), 1.0, "s");
        assert!(interior_functional(&one, &x1, &x2).unwrap().field.values.iter().all(|v| v.abs() < 1e-12));
        let s = bump(&g);
        let w = interior_functional(&s, &x1, &x1).unwrap();
        assert!(max_diff(&w.field.values, &s.values) < 1e-12);
        assert_eq!(w.tag, FUNCTIONAL_TAG);
    }

    #[test]
    fn functional_is_second_order() {
        let err = |n: usize| {
            let g = grid(n);
            let s = ScalarField::from_fn(g.clone(), "s", |p| 1.0 + 0.5 * p[0] * p[1]);
            let u1 = ScalarField::from_fn(g.clone(), "u", |p| (p[0] + 0.3 * p[1]).sin());
            let u2 = ScalarField::from_fn(g.clone(), "u", |p| (0.5 * p[0]).exp() * p[1]);
            let w = interior_functional(&s, &u1, &u2).unwrap();
            let exact = ScalarField::from_fn(g, "w", |p| {
                let c = (p[0] + 0.3 * p[1]).cos();
                let e = (0.5 * p[0]).exp();
                (1.0 + 0.5 * p[0] * p[1]) * (c * 0.5 * e * p[1] + 0.3 * c * e)
            });
            max_diff(&w.field.values, &exact.values)
        };
        let (a, b) = (err(21), err(41));
        assert!(a / b > 3.5, "{a} {b}");
    }

    fn dirichlet_xy(g: &GridSpec) -> Vec<CurrentPattern> {
        vec![CurrentPattern::dirichlet_from_fn(g, |p| p[0]), CurrentPattern::dirichlet_from_fn(g, |p| p[1])]
    }

    fn observe(sigma: &ScalarField, patterns: &[CurrentPattern]) -> Vec<ObservedMap> {
        let u: Vec<ScalarField> = patterns.iter().map(|p| solve_conductivity(sigma, p).unwrap()).collect();
        [(0, 0), (1, 1), (0, 1)]
            .into_iter()
            .map(|(a, b)| ObservedMap { first: a, second: b, map: interior_functional(sigma, &u[a], &u[b]).unwrap() })
            .collect()
    }

    #[test]
    fn true_conductivity_is_a_fixed_point() {
        let g = grid(17);
        let pats = dirichlet_xy(&g);
        let maps = observe(&ScalarField::constant(g.clone(), 1.0, "s"), &pats);
        let (s, rep) = reconstruct_sigma(&g, pats, maps, &AetOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.objective, vec![0.0]);
        assert!(s.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let g = grid(17);
        let pats = vec![
            CurrentPattern::dirichlet_from_fn(&g, |p| p[0]),
            CurrentPattern::neumann_from_fn(&g, |p| if p[1].abs() >= 1.0 - 1e-12 { p[1].signum() * (1.0 + p[0]) } else { 0.0 }),
        ];
        let maps = observe(&bump(&g), &pats);
        let tight = SolveOptions { tol: 1e-14, max_iter: 20_000 };
        for band in [None, Some(EigenBasis::isotropic(vec![-1.0; 2], vec![1.0; 2], 1.0, 20.0, None).unwrap())] {
            let opts = AetOptions { solve: tight.clone(), band_limit: band, beta: Some(1e-3), ..Default::default() };
            let prob = AetProblem::new(&g, pats.clone(), maps.clone(), &opts).unwrap();
            let s0 = ScalarField::from_fn(g.clone(), "s", |p| 1.2 + 0.3 * (2.0 * p[0]).cos() * p[1]);
            let (_, grad) = prob.gradient(&s0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..5 {
                let d: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let eps = 1e-5;
                let at = |t: f64| {
                    let v = s0.values.iter().zip(&d).map(|(s, d)| s + t * d).collect();
                    prob.objective(&ScalarField { grid: g.clone(), values: v, name: String::new() }).unwrap()
                };
                let fd = (at(eps) - at(-eps)) / (2.0 * eps);
                let ad: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();
                assert!((fd - ad).abs() <= 1e-5 * ad.abs(), "fd {fd} adjoint {ad}");
            }
        }
    }

    #[test]
    fn recovers_a_bump_from_exact_maps() {
        let g = grid(25);
        let truth = bump(&g);
        let pats = dirichlet_xy(&g);
        let maps = observe(&truth, &pats);
        let (s, rep) = reconstruct_sigma(&g, pats, maps, &AetOptions::default()).unwrap();
        assert!(rep.objective.windows(2).all(|w| w[1] <= w[0]));
        let err = crate::sinogram::relative_rms(&s.values, &truth.values);
        assert!(err < 0.02, "{err} after {} iterations", rep.iterations);
    }
}
