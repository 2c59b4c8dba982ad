//! Error metrics of a reconstruction against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `‖x − t‖₂ / ‖t‖₂`.
    pub relative_l2: f64,
    /// `max |x − t|`.
    pub linf: f64,
    /// `10 log₁₀(range² / mse)` with `range = max t − min t`; infinite
    /// for an exact match.
    pub psnr_db: f64,
}

pub fn compare(x: &ScalarField, truth: &ScalarField) -> Result<Metrics> {
    if !x.grid.same_lattice(&truth.grid) {
        return Err(Error::InvalidGrid("reconstruction and truth grids differ".into()));
    }
    compare_values(&x.values, &truth.values)
}

/// [`compare`] on raw sample arrays, e.g. two sinograms.
pub fn compare_values(x: &[f64], truth: &[f64]) -> Result<Metrics> {
    if x.len() != truth.len() {
        return Err(Error::InvalidArgument(format!("{} samples against {} in the reference", x.len(), truth.len())));
    }
    if let Some(i) = x.iter().chain(truth).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i % x.len().max(1)));
    }
    let (mut se, mut tt, mut linf) = (0.0, 0.0, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b) in x.iter().zip(truth) {
        let d = a - b;
        se += d * d;
        tt += b * b;
        linf = linf.max(d.abs());
        lo = lo.min(*b);
        hi = hi.max(*b);
    }
    if tt == 0.0 {
        return Err(Error::InvalidField("ground truth is identically zero".into()));
    }
    let range = hi - lo;
    let mse = se / x.len() as f64;
    let psnr_db = if mse == 0.0 { f64::INFINITY } else { 10.0 * (range * range / mse).log10() };
    Ok(Metrics { relative_l2: (se / tt).sqrt(), linf, psnr_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn known_values() {
        let g = GridSpec::cube(2, 2, 0.0, 1.0).unwrap();
        let t = ScalarField::new(g.clone(), vec![0.0, 1.0, 2.0, 2.0], "t").unwrap();
        let x = ScalarField::new(g, vec![0.0, 1.0, 2.0, 3.0], "x").unwrap();
        let m = compare(&x, &t).unwrap();
        assert!((m.relative_l2 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.linf, 1.0);
        // mse = 1/4, range 2: 10 log10(16)
        assert!((m.psnr_db - 10.0 * 16f64.log10()).abs() < 1e-12);
        assert_eq!(compare(&t, &t).unwrap().psnr_db, f64::INFINITY);
    }

    #[test]
    fn zero_truth_is_rejected() {
        let g = GridSpec::cube(2, 3, 0.0, 1.0).unwrap();
        let z = ScalarField::zeros(g, "z");
        assert!(compare(&z, &z).is_err());
        assert!(compare_values(&[1.0], &[1.0, 2.0]).is_err());
    }
}
