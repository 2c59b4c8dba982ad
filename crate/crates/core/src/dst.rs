//! Type-I discrete sine transform through a real-odd FFT extension.
//!
//! `y_k = Σ_{n=1}^{N} x_n sin(π k n / (N+1))`, `k = 1..N`. Applying it twice
//! gives `(N+1)/2` times the identity.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dst1 { n, fft: planner.plan_fft_forward(2 * (n + 1)) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place transform of `x` (length `n`), using `buf` as scratch.
    pub fn apply(&self, x: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf.clear();
        buf.resize(m, Complex::new(0.0, 0.0));
        for i in 0..n {
            buf[i + 1] = Complex::new(x[i], 0.0);
            buf[m - 1 - i] = Complex::new(-x[i], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            x[k] = -0.5 * buf[k + 1].im;
        }
    }
}

/// Apply a DST-I along every axis of a row-major array of the given shape.
pub fn dst_nd(data: &mut [f64], shape: &[usize]) {
    let d = shape.len();
    let total: usize = shape.iter().product();
    debug_assert_eq!(total, data.len());
    let mut buf = Vec::new();
    for a in 0..d {
        let n = shape[a];
        let plan = Dst1::new(n);
        let stride: usize = shape[a + 1..].iter().product();
        let outer = total / (n * stride);
        let mut line = vec![0.0; n];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for i in 0..n {
                    line[i] = data[base + i * stride];
                }
                plan.apply(&mut line, &mut buf);
                for i in 0..n {
                    data[base + i * stride] = line[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matches_direct_sum_and_inverts() {
        let n = 13;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 4.5).collect();
        let mut y = x.clone();
        let plan = Dst1::new(n);
        let mut buf = Vec::new();
        plan.apply(&mut y, &mut buf);
        for k in 0..n {
            let direct: f64 = (0..n).map(|i| x[i] * (PI * ((k + 1) * (i + 1)) as f64 / (n + 1) as f64).sin()).sum();
            assert!((y[k] - direct).abs() < 1e-12);
        }
        plan.apply(&mut y, &mut buf);
        for i in 0..n {
            assert!((y[i] * 2.0 / (n + 1) as f64 - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_in_two_axes() {
        let shape = [5, 7];
        let x: Vec<f64> = (0..35).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = x.clone();
        dst_nd(&mut y, &shape);
        for k in 0..5 {
            for l in 0..7 {
                let mut s = 0.0;
                for i in 0..5 {
                    for j in 0..7 {
                        s += x[i * 7 + j]
                            * (PI * ((k + 1) * (i + 1)) as f64 / 6.0).sin()
                            * (PI * ((l + 1) * (j + 1)) as f64 / 8.0).sin();
                    }
                }
                assert!((y[k * 7 + l] - s).abs() < 1e-12);
            }
        }
    }
}
