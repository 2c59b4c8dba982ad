//! Closed-form filtered backprojection for a spherical observation surface
//! and constant sound speed in 3D.
//!
//! All three variants share the prefactor `−1/(8π²R)` and act on spherical
//! integrals `g(y, r)`:
//!
//! * `LaplacianOutside`: `f = −1/(8π²R) Δ_x ∫ g(y,|y−x|)/|y−x| dA(y)`
//! * `SecondRadial`: filter `(1/r) ∂²_r g`
//! * `NestedRadial`: filter `(1/r) ∂_r (r ∂_r (g/r))`

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::to_integrals;
use crate::grid::{dist, GridSpec, ScalarField};
use crate::interp::cubic_at;
use crate::sinogram::{Sinogram, SinogramKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbpVariant {
    LaplacianOutside,
    SecondRadial,
    NestedRadial,
}

impl FbpVariant {
    pub const ALL: [FbpVariant; 3] = [FbpVariant::LaplacianOutside, FbpVariant::SecondRadial, FbpVariant::NestedRadial];

    pub fn name(&self) -> &'static str {
        match self {
            FbpVariant::LaplacianOutside => "laplacian_outside",
            FbpVariant::SecondRadial => "second_radial",
            FbpVariant::NestedRadial => "nested_radial",
        }
    }
}

/// What to do when `|y − x|` exceeds the sampled radius range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    #[default]
    ZeroExtend,
    Reject,
}

pub const MIN_RADII: usize = 5;

/// Second derivative with centered differences inside and third-order
/// one-sided stencils at both ends.
fn second_derivative(q: &[f64], dr: f64) -> Vec<f64> {
    let n = q.len();
    let s = 1.0 / (dr * dr);
    let mut d = vec![0.0; n];
    for j in 1..n - 1 {
        d[j] = (q[j + 1] - 2.0 * q[j] + q[j - 1]) * s;
    }
    d[0] = (2.0 * q[0] - 5.0 * q[1] + 4.0 * q[2] - q[3]) * s;
    d[n - 1] = (2.0 * q[n - 1] - 5.0 * q[n - 2] + 4.0 * q[n - 3] - q[n - 4]) * s;
    d
}

fn first_derivative(q: &[f64], dr: f64) -> Vec<f64> {
    let n = q.len();
    let mut d = vec![0.0; n];
    for j in 1..n - 1 {
        d[j] = (q[j + 1] - q[j - 1]) / (2.0 * dr);
    }
    d[0] = (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * dr);
    d[n - 1] = (3.0 * q[n - 1] - 4.0 * q[n - 2] + q[n - 3]) / (2.0 * dr);
    d
}

/// Apply one variant's radial filter to one trace sampled at `r_j = j·dr`.
/// The value at `r = 0` is set to zero; detectors never see the source there.
pub fn filter_trace(g: &[f64], dr: f64, variant: FbpVariant) -> Vec<f64> {
    let n = g.len();
    let r = |j: usize| j as f64 * dr;
    let mut out = vec![0.0; n];
    match variant {
        FbpVariant::LaplacianOutside => {
            for j in 1..n {
                out[j] = g[j] / r(j);
            }
        }
        FbpVariant::SecondRadial => {
            let d2 = second_derivative(g, dr);
            for j in 1..n {
                out[j] = d2[j] / r(j);
            }
        }
        FbpVariant::NestedRadial => {
            let mut q = vec![0.0; n];
            for j in 1..n {
                q[j] = g[j] / r(j);
            }
            q[0] = 2.0 * q[1] - q[2];
            let s = 1.0 / (dr * dr);
            for j in 1..n - 1 {
                let up = (r(j) + 0.5 * dr) * (q[j + 1] - q[j]);
                let dn = (r(j) - 0.5 * dr) * (q[j] - q[j - 1]);
                out[j] = (up - dn) * s / r(j);
            }
            // (1/r)(r q')' = q'/r + q'' at the outer end
            let d1 = first_derivative(&q[n - 4..], dr);
            let d2 = second_derivative(&q[n - 4..], dr);
            out[n - 1] = d1[3] / r(n - 1) + d2[3];
        }
    }
    out
}

/// Radial filtration of spherical-integral data. Mean-kind input is
/// converted to integrals first.
pub fn filter_radial(g: &Sinogram, variant: FbpVariant) -> Result<Sinogram> {
    let g = to_integrals(g)?;
    if g.n_times < MIN_RADII {
        return Err(Error::Sinogram(format!("need at least {MIN_RADII} radial samples, got {}", g.n_times)));
    }
    let dr = g.dr()?;
    let rows: Vec<Vec<f64>> = (0..g.n_detectors()).into_par_iter().map(|i| filter_trace(g.trace(i), dr, variant)).collect();
    Ok(g.with_values(rows.concat(), SinogramKind::Filtered(variant)))
}

#[derive(Debug, Clone, Default)]
pub struct FbpOptions {
    pub range: RangePolicy,
}

pub fn reconstruct_fbp(g: &Sinogram, variant: FbpVariant, out_grid: &GridSpec) -> Result<ScalarField> {
    reconstruct_fbp_with(g, variant, out_grid, &FbpOptions::default())
}

pub fn reconstruct_fbp_with(
    g: &Sinogram,
    variant: FbpVariant,
    out_grid: &GridSpec,
    opts: &FbpOptions,
) -> Result<ScalarField> {
    if g.surface.dim != 3 || out_grid.dim() != 3 {
        return Err(Error::Unsupported("backprojection formulas are implemented for 3D data only".into()));
    }
    let (center, radius) = g.surface.sphere_params()?;
    let filtered = match g.kind {
        SinogramKind::Filtered(v) if v == variant => g.clone(),
        SinogramKind::Filtered(v) => {
            return Err(Error::Sinogram(format!("data filtered for {} but {} requested", v.name(), variant.name())))
        }
        SinogramKind::Pressure => {
            return Err(Error::Sinogram("backprojection needs spherical integrals, got pressure traces".into()))
        }
        _ => filter_radial(g, variant)?,
    };
    backproject(&filtered, center, radius, variant, out_grid, opts)
}

/// Weighted backprojection of already filtered data; used directly by
/// focusing, where the transducer performs the filtration.
pub(crate) fn backproject(
    filtered: &Sinogram,
    center: [f64; 3],
    radius: f64,
    variant: FbpVariant,
    out_grid: &GridSpec,
    opts: &FbpOptions,
) -> Result<ScalarField> {
    let dr = filtered.dr()?;
    let grid = if variant == FbpVariant::LaplacianOutside { out_grid.padded(1) } else { out_grid.clone() };
    for k in 0..grid.len() {
        let x = grid.node_at(k);
        if dist(&x, &center) >= radius {
            return Err(Error::InvalidArgument(format!(
                "reconstruction node {x:?} is not strictly inside the detector sphere"
            )));
        }
    }
    let n_r = filtered.n_times;
    let r_max = (n_r - 1) as f64 * dr;
    let pts = &filtered.surface.points;
    let w = &filtered.surface.weights;
    let pref = -1.0 / (8.0 * PI * PI * radius);

    let vals: Vec<(f64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.node_at(k);
            let mut s = 0.0;
            let mut outside = false;
            for (i, y) in pts.iter().enumerate() {
                let r = dist(&x, y);
                match cubic_at(filtered.trace(i), r / dr) {
                    Some(v) => s += w[i] * v,
                    None => outside |= r > r_max,
                }
            }
            (pref * s, outside)
        })
        .collect();
    if vals.iter().any(|v| v.1) {
        match opts.range {
            RangePolicy::Reject => {
                return Err(Error::Sinogram(format!("distances exceed the sampled radius range {r_max}")))
            }
            RangePolicy::ZeroExtend => warn!("distances exceed the sampled radius range {r_max}; data zero-extended"),
        }
    }
    let bp: Vec<f64> = vals.into_iter().map(|v| v.0).collect();
    if variant != FbpVariant::LaplacianOutside {
        return ScalarField::new(grid, bp, "fbp");
    }
    // 7-point Laplacian of the padded volume, restricted to the output grid.
    let st = grid.strides3();
    let h = grid.spacing3();
    let mut out = vec![0.0; out_grid.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let idx = out_grid.multi_index(k);
        let j = grid.flat_index([idx[0] + 1, idx[1] + 1, idx[2] + 1]);
        let mut l = 0.0;
        for a in 0..3 {
            l += (bp[j + st[a]] + bp[j - st[a]] - 2.0 * bp[j]) / (h[a] * h[a]);
        }
        *o = l;
    }
    ScalarField::new(out_grid.clone(), out, "fbp")
}

/// Warn when a ground-truth source reaches outside the detector sphere,
/// where the formulas no longer hold. Returns whether it does.
pub fn warn_exterior_support(truth: &ScalarField, g: &Sinogram) -> Result<bool> {
    let (c, r) = g.surface.sphere_params()?;
    let outside = truth
        .values
        .iter()
        .enumerate()
        .any(|(k, v)| *v != 0.0 && dist(&truth.grid.node_at(k), &c) >= r);
    if outside {
        warn!("source support extends outside the detector sphere; interior reconstruction may be wrong");
    }
    Ok(outside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::ObservationSurface;

    fn sino(f: impl Fn(f64) -> f64, n: usize, dr: f64) -> Sinogram {
        let s = ObservationSurface::sphere(&[0.0, 0.0, 0.0], 1.0, 4).unwrap();
        let mut v = Vec::new();
        for _ in 0..s.len() {
            v.extend((0..n).map(|j| f(j as f64 * dr)));
        }
        Sinogram::new(s, dr, n, v, SinogramKind::SphericalIntegral, Some(1.0)).unwrap()
    }

    #[test]
    fn polynomial_filters_are_exact() {
        let dr = 0.01;
        let out = filter_radial(&sino(|r| r * r, 50, dr), FbpVariant::SecondRadial).unwrap();
        for j in 1..50 {
            let r = j as f64 * dr;
            assert!((out.trace(3)[j] - 2.0 / r).abs() < 1e-8 * (2.0 / r), "j={j}");
        }
        let out = filter_radial(&sino(|r| r, 50, dr), FbpVariant::NestedRadial).unwrap();
        assert!(out.values.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn smooth_filter_error_is_second_order() {
        // g = r³ e^{−r}: closed-form derivatives as oracle
        let g = |r: f64| r.powi(3) * (-r).exp();
        let g2 = |r: f64| (6.0 * r - 6.0 * r * r + r.powi(3)) * (-r).exp();
        // q = r² e^{−r}; (1/r)(r q')' = q'' + q'/r
        let nested = |r: f64| {
            let q1 = (2.0 * r - r * r) * (-r).exp();
            let q2 = (2.0 - 4.0 * r + r * r) * (-r).exp();
            q2 + q1 / r
        };
        let err = |dr: f64, v: FbpVariant, exact: &dyn Fn(f64) -> f64| {
            let n = (3.0 / dr) as usize + 1;
            let out = filter_radial(&sino(g, n, dr), v).unwrap();
            // away from the 1/r pole, where detectors actually sample the source
            let j0 = (0.5 / dr) as usize;
            (j0..n - 1).map(|j| (out.trace(0)[j] - exact(j as f64 * dr)).abs()).fold(0.0, f64::max)
        };
        for (v, ex) in [
            (FbpVariant::SecondRadial, &(|r: f64| g2(r) / r) as &dyn Fn(f64) -> f64),
            (FbpVariant::NestedRadial, &nested as &dyn Fn(f64) -> f64),
        ] {
            let e1 = err(0.02, v, ex);
            let e2 = err(0.01, v, ex);
            let order = (e1 / e2).log2();
            assert!(order > 1.8, "{v:?}: observed order {order} ({e1} -> {e2})");
        }
    }

    #[test]
    fn rejects_short_or_wrong_data() {
        assert!(filter_radial(&sino(|r| r, 4, 0.1), FbpVariant::SecondRadial).is_err());
        let s = ObservationSurface::sphere(&[0.0, 0.0, 0.0], 1.0, 4).unwrap();
        let p = Sinogram::zeros(s, 0.1, 20, SinogramKind::Pressure, None);
        let grid = GridSpec::cube(3, 8, -0.5, 0.5).unwrap();
        assert!(reconstruct_fbp(&p, FbpVariant::SecondRadial, &grid).is_err());
        let cube = ObservationSurface::cube_on_grid(&grid).unwrap();
        let c = Sinogram::zeros(cube, 0.1, 20, SinogramKind::SphericalIntegral, Some(1.0));
        assert!(matches!(reconstruct_fbp(&c, FbpVariant::SecondRadial, &grid), Err(Error::Surface(_))));
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = sino(|_| 0.0, 40, 0.05);
        let grid = GridSpec::cube(3, 6, -0.4, 0.4).unwrap();
        for v in FbpVariant::ALL {
            let f = reconstruct_fbp(&g, v, &grid).unwrap();
            assert!(f.values.iter().all(|x| *x == 0.0));
        }
        let big = GridSpec::cube(3, 6, -0.9, 0.9).unwrap();
        assert!(reconstruct_fbp(&g, FbpVariant::SecondRadial, &big).is_err());
    }
}
