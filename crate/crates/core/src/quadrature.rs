//! Quadrature rules: Gauss-Legendre on an interval, product rules on the
//! unit sphere and circle, and 1D trapezoid weights.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos θ` with
/// `n_polar` nodes times `2·n_polar` equispaced azimuths. Integrates
/// spherical harmonics exactly up to degree `2·n_polar - 1`.
/// Returns unit directions and weights summing to `4π`.
pub fn sphere_rule(n_polar: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let (z, wz) = gauss_legendre(n_polar);
    let n_az = 2 * n_polar;
    let dphi = 2.0 * PI / n_az as f64;
    let mut dirs = Vec::with_capacity(n_polar * n_az);
    let mut w = Vec::with_capacity(n_polar * n_az);
    for (zi, wi) in z.iter().zip(&wz) {
        let s = (1.0 - zi * zi).max(0.0).sqrt();
        for k in 0..n_az {
            // half-step offset keeps no node on the seam
            let phi = (k as f64 + 0.5) * dphi;
            dirs.push([s * phi.cos(), s * phi.sin(), *zi]);
            w.push(wi * dphi);
        }
    }
    (dirs, w)
}

/// Equispaced rule on the unit circle with weights summing to `2π`.
pub fn circle_rule(n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let d = 2.0 * PI / n as f64;
    let dirs = (0..n)
        .map(|k| {
            let a = (k as f64 + 0.5) * d;
            [a.cos(), a.sin(), 0.0]
        })
        .collect();
    (dirs, vec![d; n])
}

/// Trapezoid weights for `n` equispaced samples with step `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n >= 1 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

/// Trapezoid integral of equispaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}
