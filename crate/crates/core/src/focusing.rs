//! Synthetic focusing: measurements made while a family of shell-shaped
//! ultrasound waves modulates the medium are turned into point values of
//! the interior functional.
//!
//! A shell wave centered at `y` with radius `r` pairs with the interior map
//! `W` as its circular (spherical) integral; an N-shaped pulse pairs as the
//! radial derivative of that integral, smoothed over the pulse. Recovering
//! `W` is then an inverse spherical-mean problem.
//!
//! In 2D the inversion expands `W` in the Dirichlet eigenfunctions of the
//! square of centers. For `x` inside, Green's formula gives
//! `ψ_k(x) = ∫_∂Ω G_k(|x−y|) ∂_n ψ_k(y) dy` with `G_k(r) = −¼ Y₀(k r)`, so
//! `⟨W, ψ_k⟩ = ∫_∂Ω ∂_n ψ_k(y) ∫_0^∞ I(y, r) G_k(r) dr dy`.
//! For N-shaped data the radial integral is moved onto `∂_r I` by parts,
//! against `K_k(r) = ∫_r^{r_max} G_k`.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::{backproject, reconstruct_fbp, FbpOptions, FbpVariant};
use crate::forward::{spherical_integrals, MeanOptions};
use crate::grid::{GridSpec, ScalarField};
use crate::io::{decode_container, decode_field, encode_container, encode_field, Provenance};
use crate::noise::add_relative_noise;
use crate::quadrature::gauss_legendre;
use crate::series::{synthesize_field, EigenBasis, ModeCoefficients};
use crate::sinogram::{Sinogram, SinogramKind};
use crate::surface::{ObservationSurface, SurfaceSpec};

pub const INTERIOR_MAGIC: &[u8; 8] = b"TATIMP01";
pub const MEASUREMENT_MAGIC: &[u8; 8] = b"TATMOD02";

/// Functionals an [`InteriorMap`] may carry. Only the first is produced by
/// this crate; the others are reserved names.
pub const REGISTERED_TAGS: &[&str] = &["sigma_grad_u1_dot_grad_u2", "sigma_grad_u_squared", "focused"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    DeltaShell,
    NShapedShell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocusingBasis {
    pub kind: BasisKind,
    pub surface: ObservationSurface,
    pub radii: Vec<f64>,
    /// Half-width of the N pulse.
    pub half_width: Option<f64>,
}

impl FocusingBasis {
    pub fn new(kind: BasisKind, surface: ObservationSurface, radii: Vec<f64>, half_width: Option<f64>) -> Result<Self> {
        if radii.len() < 5 {
            return Err(Error::InvalidArgument("a focusing basis needs at least 5 radii".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("radii must be non-negative and strictly ascending".into()));
        }
        match (kind, half_width) {
            (BasisKind::NShapedShell, None) => {
                return Err(Error::InvalidArgument("N-shaped basis needs a pulse half-width".into()))
            }
            (BasisKind::NShapedShell, Some(w)) => {
                let step = radii.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
                if !(w >= step * (1.0 - 1e-12)) {
                    return Err(Error::InvalidArgument(format!(
                        "pulse half-width {w} is below the radius step {step} and cannot be resolved"
                    )));
                }
            }
            _ => {}
        }
        Ok(FocusingBasis { kind, surface, radii, half_width })
    }

    /// `n` radii `j·r_max/(n−1)`.
    pub fn uniform(kind: BasisKind, surface: ObservationSurface, r_max: f64, n: usize, half_width: Option<f64>) -> Result<Self> {
        let dr = r_max / (n.max(2) - 1) as f64;
        Self::new(kind, surface, (0..n).map(|j| j as f64 * dr).collect(), half_width)
    }

    fn uniform_step(&self) -> Option<f64> {
        let dr = self.radii[1] - self.radii[0];
        let ok = self.radii[0] == 0.0
            && self.radii.windows(2).all(|w| ((w[1] - w[0]) - dr).abs() <= 1e-9 * dr);
        ok.then_some(dr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedMeasurements {
    pub basis: FocusingBasis,
    /// Row-major `[center][radius]`.
    pub values: Vec<f64>,
}

impl ModulatedMeasurements {
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.basis.radii.len();
        &self.values[i * n..(i + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMap {
    pub field: ScalarField,
    pub tag: String,
}

impl InteriorMap {
    pub fn new(field: ScalarField, tag: &str) -> Result<Self> {
        if !REGISTERED_TAGS.contains(&tag) {
            return Err(Error::InvalidArgument(format!("unknown interior functional tag {tag:?}")));
        }
        if let Some(i) = field.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(InteriorMap { field, tag: tag.to_owned() })
    }
}

/// Nonzero values of `w` must lie inside the closed region bounded by the
/// surface; cube surfaces may touch them, spheres may not.
fn check_enclosed(w: &ScalarField, surface: &ObservationSurface) -> Result<()> {
    let slack = if surface.is_cube() { -1e-9 * w.grid.min_spacing() } else { 0.0 };
    for (k, v) in w.values.iter().enumerate() {
        if *v != 0.0 && !surface.contains(&w.grid.node_at(k), slack) {
            return Err(Error::Support(format!(
                "interior map is nonzero at {:?}, outside the basis surface",
                w.grid.node_at(k)
            )));
        }
    }
    Ok(())
}

/// Pair `W` with every basis wave, then add Gaussian noise with standard
/// deviation `noise_level · rms(M)`.
pub fn synthesize_modulated_measurements(
    w: &InteriorMap,
    basis: &FocusingBasis,
    noise_level: f64,
    seed: u64,
) -> Result<ModulatedMeasurements> {
    if w.field.grid.dim() != basis.surface.dim {
        return Err(Error::InvalidArgument("interior map and basis dimensions differ".into()));
    }
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {noise_level} must be non-negative")));
    }
    check_enclosed(&w.field, &basis.surface)?;
    let opts = MeanOptions::default();
    let centers = &basis.surface.points;
    let mut values = match basis.kind {
        BasisKind::DeltaShell => spherical_integrals(&w.field, centers, &basis.radii, &opts)?,
        BasisKind::NShapedShell => {
            // (1/δ²)[∫_0^δ I(r+s) ds − ∫_{−δ}^0 I(r+s) ds]
            let d = basis.half_width.expect("validated");
            let (x, wt) = gauss_legendre(4);
            let nr = basis.radii.len();
            let mut acc = vec![0.0; centers.len() * nr];
            for side in [1.0, -1.0] {
                for (xq, wq) in x.iter().zip(&wt) {
                    let s = side * 0.5 * d * (xq + 1.0);
                    let shifted: Vec<f64> = basis.radii.iter().map(|r| (r + s).max(0.0)).collect();
                    let vals = spherical_integrals(&w.field, centers, &shifted, &opts)?;
                    let scale = side * 0.5 * d * wq / (d * d);
                    for (a, v) in acc.iter_mut().zip(vals) {
                        *a += scale * v;
                    }
                }
            }
            acc
        }
    };
    add_relative_noise(&mut values, noise_level, seed)?;
    Ok(ModulatedMeasurements { basis: basis.clone(), values })
}

/// `−¼ Y₀(k r)`, the real radial fundamental solution of `Δ + k²`.
fn kernel(k: f64, r: f64) -> f64 {
    -0.25 * libm::y0(k * r)
}

fn trapezoid_nonuniform(r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut w = vec![0.0; n];
    for j in 0..n - 1 {
        let h = 0.5 * (r[j + 1] - r[j]);
        w[j] += h;
        w[j + 1] += h;
    }
    w
}

/// `K(r_j) = ∫_{r_j}^{r_max} G`, by 6-point Gauss per interval.
fn tail_integrals(k: f64, r: &[f64], x: &[f64], wt: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut out = vec![0.0; n];
    for j in (0..n - 1).rev() {
        let (a, b) = (r[j], r[j + 1]);
        let half = 0.5 * (b - a);
        let seg: f64 = x.iter().zip(wt).map(|(xi, wi)| wi * kernel(k, a + half * (xi + 1.0))).sum::<f64>() * half;
        out[j] = out[j + 1] + seg;
    }
    out
}

/// Eigenbasis a 2D focus expands into. An N pulse of half-width `δ` is
/// resolved up to `k = π/δ`; beyond that the division by its transfer
/// function would amplify noise without bound.
pub fn focus_eigenbasis(basis: &FocusingBasis) -> Result<EigenBasis> {
    if basis.surface.dim != 2 || !basis.surface.is_cube() {
        return Err(Error::Unsupported("the eigenfunction focus needs centers on a square".into()));
    }
    let full = EigenBasis::for_surface(&basis.surface, 1.0, None)?;
    match (basis.kind, basis.half_width) {
        (BasisKind::NShapedShell, Some(d)) if PI / d < full.eigenvalues().iter().fold(0.0, |m: f64, v| m.max(*v)) => {
            EigenBasis::for_surface(&basis.surface, 1.0, Some(PI / d))
        }
        _ => Ok(full),
    }
}

fn focus_2d(m: &ModulatedMeasurements, out_grid: &GridSpec) -> Result<ScalarField> {
    let basis = &m.basis;
    let s = &basis.surface;
    let modes = focus_eigenbasis(basis)?;
    let radii = &basis.radii;
    let nr = radii.len();
    let tw = trapezoid_nonuniform(radii);
    let (gx, gw) = gauss_legendre(6);
    // radial kernel per mode, trapezoid weights folded in
    let kernels: Vec<Vec<f64>> = modes
        .modes
        .par_iter()
        .map(|mode| {
            let k = modes.eigenvalue(mode);
            match basis.kind {
                BasisKind::DeltaShell => {
                    (0..nr).map(|j| if radii[j] > 0.0 { tw[j] * kernel(k, radii[j]) } else { 0.0 }).collect()
                }
                BasisKind::NShapedShell => {
                    // undo the pulse's triangle smoothing, sinc²(kδ/2)
                    let x = 0.5 * k * basis.half_width.expect("validated");
                    let gain = if x > 0.0 { (x / x.sin()).powi(2) } else { 1.0 };
                    tail_integrals(k, radii, &gx, &gw).iter().zip(&tw).map(|(kv, w)| gain * kv * w).collect()
                }
            }
        })
        .collect();
    let values: Vec<f64> = modes
        .modes
        .par_iter()
        .zip(&kernels)
        .map(|(mode, ker)| {
            let mut f = 0.0;
            for i in 0..s.len() {
                let dn = modes.dpsi_dn(mode, &s.points[i], s.faces[i]);
                if dn == 0.0 {
                    continue;
                }
                let j: f64 = m.row(i).iter().zip(ker).map(|(a, b)| a * b).sum();
                f += s.weights[i] * dn * j;
            }
            f
        })
        .collect();
    let coeffs = ModeCoefficients::new(modes, values)?;
    synthesize_field(&coeffs, out_grid)
}

fn focus_3d(m: &ModulatedMeasurements, out_grid: &GridSpec) -> Result<ScalarField> {
    let basis = &m.basis;
    let (center, radius) = basis.surface.sphere_params()?;
    let dr = basis
        .uniform_step()
        .ok_or_else(|| Error::Unsupported("3D focusing needs uniform radii starting at zero".into()))?;
    let nr = basis.radii.len();
    match basis.kind {
        BasisKind::DeltaShell => {
            let g = Sinogram::new(basis.surface.clone(), dr, nr, m.values.clone(), SinogramKind::SphericalIntegral, Some(1.0))?;
            reconstruct_fbp(&g, FbpVariant::SecondRadial, out_grid)
        }
        BasisKind::NShapedShell => {
            // the pulse already applied one radial derivative
            let mut filtered = vec![0.0; m.values.len()];
            for i in 0..basis.surface.len() {
                let row = m.row(i);
                for j in 1..nr {
                    let d = if j + 1 < nr { (row[j + 1] - row[j - 1]) / (2.0 * dr) } else { (row[j] - row[j - 1]) / dr };
                    filtered[i * nr + j] = d / basis.radii[j];
                }
            }
            let g = Sinogram::new(
                basis.surface.clone(),
                dr,
                nr,
                filtered,
                SinogramKind::Filtered(FbpVariant::SecondRadial),
                Some(1.0),
            )?;
            backproject(&g, center, radius, FbpVariant::SecondRadial, out_grid, &FbpOptions::default())
        }
    }
}

/// Recover the interior map on `out_grid` from modulated measurements.
pub fn synthetic_focus(m: &ModulatedMeasurements, out_grid: &GridSpec) -> Result<InteriorMap> {
    let n = m.basis.surface.len() * m.basis.radii.len();
    if m.values.len() != n {
        return Err(Error::InvalidArgument(format!("{} measurements for {n} basis waves", m.values.len())));
    }
    if let Some(i) = m.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if out_grid.dim() != m.basis.surface.dim {
        return Err(Error::InvalidArgument("output grid and basis dimensions differ".into()));
    }
    let mut field = match out_grid.dim() {
        2 => focus_2d(m, out_grid)?,
        _ => focus_3d(m, out_grid)?,
    };
    field.name = "focused".into();
    InteriorMap::new(field, "focused")
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasurementHeader {
    kind: BasisKind,
    surface: SurfaceSpec,
    radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn encode_measurements(m: &ModulatedMeasurements, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let h = MeasurementHeader {
        kind: m.basis.kind,
        surface: m.basis.surface.spec.clone(),
        radii: m.basis.radii.clone(),
        half_width: m.basis.half_width,
        provenance: prov.cloned(),
    };
    encode_container(MEASUREMENT_MAGIC, &h, &m.values)
}

pub fn decode_measurements(bytes: &[u8]) -> Result<ModulatedMeasurements> {
    let (h, values): (MeasurementHeader, Vec<f64>) = decode_container(bytes, MEASUREMENT_MAGIC)?;
    let surface = ObservationSurface::from_spec(h.surface)?;
    let basis = FocusingBasis::new(h.kind, surface, h.radii, h.half_width)?;
    let n = basis.surface.len() * basis.radii.len();
    if values.len() != n {
        return Err(Error::Truncated { expected: n, found: values.len() });
    }
    Ok(ModulatedMeasurements { basis, values })
}

pub fn write_measurements(m: &ModulatedMeasurements, path: &Path, prov: Option<&Provenance>) -> Result<()> {
    std::fs::write(path, encode_measurements(m, prov)?)?;
    Ok(())
}

pub fn read_measurements(path: &Path) -> Result<ModulatedMeasurements> {
    decode_measurements(&std::fs::read(path)?)
}

pub fn write_interior_map(m: &InteriorMap, path: &Path, prov: Option<&Provenance>) -> Result<()> {
    std::fs::write(path, encode_field(&m.field, INTERIOR_MAGIC, Some(&m.tag), prov)?)?;
    Ok(())
}

pub fn read_interior_map(path: &Path) -> Result<InteriorMap> {
    let (field, tag) = decode_field(&std::fs::read(path)?, INTERIOR_MAGIC)?;
    InteriorMap::new(field, tag.as_deref().unwrap_or("focused"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sinogram::relative_rms;

    fn smooth_map(grid: &GridSpec) -> InteriorMap {
        let f = ScalarField::from_fn(grid.clone(), "w", |p| {
            let b = |cx: f64, cy: f64, w: f64| {
                let r2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
                (-r2 / (2.0 * w * w)).exp()
            };
            let v = b(0.2, -0.1, 0.18) + 0.6 * b(-0.3, 0.25, 0.12);
            if v < 1e-12 {
                0.0
            } else {
                v
            }
        });
        InteriorMap::new(f, "sigma_grad_u1_dot_grad_u2").unwrap()
    }

    fn square_basis(grid: &GridSpec, kind: BasisKind, n_r: usize) -> FocusingBasis {
        let s = ObservationSurface::cube_on_grid(grid).unwrap();
        let r_max = 2.0 * 2f64.sqrt() + 0.05;
        let dr = r_max / (n_r - 1) as f64;
        FocusingBasis::uniform(kind, s, r_max, n_r, Some(2.0 * dr)).unwrap()
    }

    #[test]
    fn basis_validation() {
        let grid = GridSpec::cube(2, 17, -1.0, 1.0).unwrap();
        let s = ObservationSurface::cube_on_grid(&grid).unwrap();
        assert!(FocusingBasis::uniform(BasisKind::NShapedShell, s.clone(), 3.0, 31, Some(0.05)).is_err());
        assert!(FocusingBasis::uniform(BasisKind::NShapedShell, s.clone(), 3.0, 31, None).is_err());
        assert!(FocusingBasis::uniform(BasisKind::NShapedShell, s.clone(), 3.0, 31, Some(0.1)).is_ok());
        assert!(FocusingBasis::new(BasisKind::DeltaShell, s, vec![0.0, 0.2, 0.1, 0.3, 0.4], None).is_err());
    }

    #[test]
    fn zero_map_gives_zero_measurements_and_focus() {
        let grid = GridSpec::cube(2, 17, -1.0, 1.0).unwrap();
        let w = InteriorMap::new(ScalarField::zeros(grid.clone(), "w"), "focused").unwrap();
        for kind in [BasisKind::DeltaShell, BasisKind::NShapedShell] {
            let b = square_basis(&grid, kind, 60);
            let m = synthesize_modulated_measurements(&w, &b, 0.5, 1).unwrap();
            assert!(m.values.iter().all(|v| *v == 0.0));
            assert!(synthetic_focus(&m, &grid).unwrap().field.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn delta_shell_matches_arc_lengths_of_a_disk() {
        // circle of radius r about y meets the unit disk in an arc of length
        // 2r·acos((r² + d² − 1)/(2rd))
        let grid = GridSpec::cube(2, 401, -1.1, 1.1).unwrap();
        let f = ScalarField::from_fn(grid.clone(), "disk", |p| {
            let s = (1.0 - (p[0] * p[0] + p[1] * p[1]).sqrt()) / grid.spacing[0];
            (s + 0.5).clamp(0.0, 1.0)
        });
        let w = InteriorMap::new(f, "focused").unwrap();
        let s = ObservationSurface::sphere(&[0.0, 0.0], 1.5, 16).unwrap();
        let b = FocusingBasis::new(BasisKind::DeltaShell, s.clone(), vec![0.7, 1.0, 1.5, 2.0, 2.3], None).unwrap();
        let m = synthesize_modulated_measurements(&w, &b, 0.0, 0).unwrap();
        let d = 1.5;
        for i in 0..s.len() {
            for (j, &r) in b.radii.iter().enumerate() {
                let c: f64 = (r * r + d * d - 1.0) / (2.0 * r * d);
                let exact = 2.0 * r * c.clamp(-1.0, 1.0).acos();
                assert!((m.row(i)[j] - exact).abs() < 5e-3 * exact.max(0.1), "r={r}: {} vs {exact}", m.row(i)[j]);
            }
        }
    }

    #[test]
    fn n_pulse_is_the_radial_derivative() {
        let grid = GridSpec::cube(2, 65, -1.0, 1.0).unwrap();
        let w = smooth_map(&grid);
        let bd = square_basis(&grid, BasisKind::DeltaShell, 241);
        let bn = square_basis(&grid, BasisKind::NShapedShell, 241);
        let md = synthesize_modulated_measurements(&w, &bd, 0.0, 0).unwrap();
        let mn = synthesize_modulated_measurements(&w, &bn, 0.0, 0).unwrap();
        let dr = bd.radii[1];
        let nr = bd.radii.len();
        let mut fd = vec![0.0; mn.values.len()];
        for i in 0..bd.surface.len() {
            for j in 1..nr - 1 {
                fd[i * nr + j] = (md.row(i)[j + 1] - md.row(i)[j - 1]) / (2.0 * dr);
            }
        }
        let inner: Vec<usize> = (0..fd.len()).filter(|k| k % nr != 0 && k % nr != nr - 1).collect();
        let a: Vec<f64> = inner.iter().map(|&k| mn.values[k]).collect();
        let b: Vec<f64> = inner.iter().map(|&k| fd[k]).collect();
        assert!(relative_rms(&a, &b) < 0.03, "{}", relative_rms(&a, &b));
    }

    #[test]
    fn noise_is_seeded() {
        let grid = GridSpec::cube(2, 17, -1.0, 1.0).unwrap();
        let w = smooth_map(&grid);
        let b = square_basis(&grid, BasisKind::DeltaShell, 40);
        let a = synthesize_modulated_measurements(&w, &b, 0.1, 7).unwrap();
        let a2 = synthesize_modulated_measurements(&w, &b, 0.1, 7).unwrap();
        let c = synthesize_modulated_measurements(&w, &b, 0.1, 8).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, c);
    }

    #[test]
    fn measurement_file_round_trip() {
        let grid = GridSpec::cube(2, 17, -1.0, 1.0).unwrap();
        let w = smooth_map(&grid);
        let b = square_basis(&grid, BasisKind::NShapedShell, 40);
        let m = synthesize_modulated_measurements(&w, &b, 0.0, 0).unwrap();
        let bytes = encode_measurements(&m, None).unwrap();
        assert_eq!(decode_measurements(&bytes).unwrap(), m);
        assert!(decode_measurements(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn focus_round_trip_on_a_square() {
        let grid = GridSpec::cube(2, 40, -1.0, 1.0).unwrap();
        let w = smooth_map(&grid);
        for kind in [BasisKind::DeltaShell, BasisKind::NShapedShell] {
            let b = square_basis(&grid, kind, 300);
            let m = synthesize_modulated_measurements(&w, &b, 0.0, 0).unwrap();
            let r = synthetic_focus(&m, &grid).unwrap();
            assert_eq!(r.tag, "focused");
            let err = relative_rms(&r.field.values, &w.field.values);
            assert!(err < 0.03, "{kind:?}: {err}");
        }
    }

    #[test]
    fn focus_rejects_unsupported_geometry() {
        let grid = GridSpec::cube(2, 17, -1.0, 1.0).unwrap();
        let s = ObservationSurface::sphere(&[0.0, 0.0], 1.6, 32).unwrap();
        let b = FocusingBasis::uniform(BasisKind::DeltaShell, s, 3.0, 20, None).unwrap();
        let m = ModulatedMeasurements { values: vec![0.0; b.surface.len() * 20], basis: b };
        assert!(matches!(synthetic_focus(&m, &grid), Err(Error::Unsupported(_))));
    }

    #[test]
    fn support_outside_the_surface_is_rejected() {
        let grid = GridSpec::cube(2, 17, -1.0, 1.0).unwrap();
        let w = InteriorMap::new(ScalarField::constant(grid.clone(), 1.0, "w"), "focused").unwrap();
        let s = ObservationSurface::sphere(&[0.0, 0.0], 1.2, 32).unwrap();
        let b = FocusingBasis::uniform(BasisKind::DeltaShell, s, 3.0, 20, None).unwrap();
        assert!(matches!(synthesize_modulated_measurements(&w, &b, 0.0, 0), Err(Error::Support(_))));
        assert!(InteriorMap::new(ScalarField::zeros(grid, "w"), "no_such_tag").is_err());
    }

    #[test]
    fn interior_map_file_round_trip() {
        let grid = GridSpec::cube(2, 9, -1.0, 1.0).unwrap();
        let w = smooth_map(&grid);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.tatimp");
        write_interior_map(&w, &p, None).unwrap();
        assert_eq!(read_interior_map(&p).unwrap(), w);
    }
}
