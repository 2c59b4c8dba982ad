//! Free-space wave propagation on a padded lattice with a split-field
//! perfectly matched layer.
//!
//! The first-order system `p_t = −c² ∇·v`, `v_t = −∇p` on a staggered grid
//! (pressure on nodes, `v_a` on the faces between nodes `i` and `i + e_a`).
//! Eliminating `v` where the damping vanishes gives exactly the leapfrog
//! scheme `p^{n+1} − 2p^n + p^{n−1} = (c dt)² L p^n` with the 5/7-point
//! Laplacian `L`. Inside the layer `p = Σ_a p_a` and each part is damped
//! by the profile of its own axis.

pub(crate) struct PmlSolver {
    shape: [usize; 3],
    strides: [usize; 3],
    dim: usize,
    c2: Vec<f64>,
    // node coefficients per axis, indexed by the coordinate along that axis
    p_keep: [Vec<f64>; 3],
    p_gain: [Vec<f64>; 3],
    // face coefficients per axis, face k sits between nodes k and k+1
    v_keep: [Vec<f64>; 3],
    v_gain: [Vec<f64>; 3],
    parts: Vec<Vec<f64>>,
    vel: Vec<Vec<f64>>,
    /// Total pressure at the current level.
    pub p: Vec<f64>,
}

pub(crate) struct Layer {
    /// Layer width in cells on each side.
    pub cells: usize,
    pub sigma_max: f64,
}

impl PmlSolver {
    /// `c2` is `c²` per node; `p0` the initial pressure (zero velocity).
    pub fn new(shape: [usize; 3], dim: usize, h: [f64; 3], dt: f64, c2: Vec<f64>, p0: Vec<f64>, layer: &Layer) -> Self {
        let strides = [shape[1] * shape[2], shape[2], 1];
        let n = p0.len();
        let w = layer.cells as f64;
        // damping at a (possibly half-integer) lattice coordinate
        let sigma = |a: usize, x: f64| {
            let last = (shape[a] - 1) as f64;
            let depth = x.min(last - x);
            if layer.cells == 0 || depth >= w {
                0.0
            } else {
                let u = (w - depth) / w;
                layer.sigma_max * u * u
            }
        };
        let mut p_keep: [Vec<f64>; 3] = Default::default();
        let mut p_gain: [Vec<f64>; 3] = Default::default();
        let mut v_keep: [Vec<f64>; 3] = Default::default();
        let mut v_gain: [Vec<f64>; 3] = Default::default();
        for a in 0..dim {
            for k in 0..shape[a] {
                let s = 0.5 * dt * sigma(a, k as f64);
                p_keep[a].push((1.0 - s) / (1.0 + s));
                p_gain[a].push(dt / (h[a] * (1.0 + s)));
                if k + 1 < shape[a] {
                    let s = 0.5 * dt * sigma(a, k as f64 + 0.5);
                    v_keep[a].push((1.0 - s) / (1.0 + s));
                    v_gain[a].push(dt / (h[a] * (1.0 + s)));
                }
            }
        }
        let mut parts = vec![vec![0.0; n]; dim];
        parts[0].copy_from_slice(&p0);
        let mut solver = PmlSolver {
            shape,
            strides,
            dim,
            c2,
            p_keep,
            p_gain,
            v_keep,
            v_gain,
            parts,
            vel: vec![vec![0.0; n]; dim],
            p: p0,
        };
        // v^{1/2} = −(dt/2) ∇p^0, which makes p^1 = p^0 + ½(c dt)² L p^0
        for a in 0..dim {
            for g in &mut solver.v_gain[a] {
                *g *= 0.5;
            }
        }
        solver.update_velocity();
        for a in 0..dim {
            for g in &mut solver.v_gain[a] {
                *g *= 2.0;
            }
        }
        solver.update_pressure();
        solver
    }

    /// Advance the pressure by one step.
    pub fn step(&mut self) {
        self.update_velocity();
        self.update_pressure();
    }

    fn update_velocity(&mut self) {
        let [n0, n1, n2] = self.shape;
        let st = self.strides;
        let p = &self.p;
        let k_lo = if self.dim == 3 { 1 } else { 0 };
        let k_hi = if self.dim == 3 { n2 - 1 } else { 1 };
        for a in 0..self.dim {
            let v = &mut self.vel[a];
            let (keep, gain) = (&self.v_keep[a], &self.v_gain[a]);
            let s = st[a];
            // faces with both endpoints off the outer wall in the other axes
            let (i_lo, i_hi) = if a == 0 { (0, n0 - 1) } else { (1, n0 - 1) };
            let (j_lo, j_hi) = if a == 1 { (0, n1 - 1) } else { (1, n1 - 1) };
            let (kk_lo, kk_hi) = if a == 2 { (0, n2 - 1) } else { (k_lo, k_hi) };
            for i in i_lo..i_hi {
                for j in j_lo..j_hi {
                    let base = i * st[0] + j * st[1];
                    match a {
                        0 => {
                            let (kp, g) = (keep[i], gain[i]);
                            for idx in base + kk_lo..base + kk_hi {
                                v[idx] = kp * v[idx] - g * (p[idx + s] - p[idx]);
                            }
                        }
                        1 => {
                            let (kp, g) = (keep[j], gain[j]);
                            for idx in base + kk_lo..base + kk_hi {
                                v[idx] = kp * v[idx] - g * (p[idx + s] - p[idx]);
                            }
                        }
                        _ => {
                            for (k, idx) in (base + kk_lo..base + kk_hi).enumerate() {
                                let kz = kk_lo + k;
                                v[idx] = keep[kz] * v[idx] - gain[kz] * (p[idx + 1] - p[idx]);
                            }
                        }
                    }
                }
            }
        }
    }

    fn update_pressure(&mut self) {
        let [n0, n1, n2] = self.shape;
        let st = self.strides;
        let (k_lo, k_hi) = if self.dim == 3 { (1, n2 - 1) } else { (0, 1) };
        for a in 0..self.dim {
            let part = &mut self.parts[a];
            let v = &self.vel[a];
            let (keep, gain) = (&self.p_keep[a], &self.p_gain[a]);
            let s = st[a];
            for i in 1..n0 - 1 {
                for j in 1..n1 - 1 {
                    let base = i * st[0] + j * st[1];
                    for k in k_lo..k_hi {
                        let idx = base + k;
                        let c = match a {
                            0 => i,
                            1 => j,
                            _ => k,
                        };
                        part[idx] = keep[c] * part[idx] - self.c2[idx] * gain[c] * (v[idx] - v[idx - s]);
                    }
                }
            }
        }
        let p = &mut self.p;
        p.copy_from_slice(&self.parts[0]);
        for part in &self.parts[1..] {
            for (x, y) in p.iter_mut().zip(part) {
                *x += y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{box_runs, Stencil};

    #[test]
    fn matches_leapfrog_without_damping() {
        let shape = [20, 18, 16];
        let n: usize = shape.iter().product();
        let h = [0.05; 3];
        let dt = 0.02;
        let c2: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((i % 7) as f64 / 7.0)).collect();
        let mut p0 = vec![0.0; n];
        for i in 5..15 {
            for j in 5..13 {
                for k in 4..12 {
                    let r2 = ((i as f64 - 10.0).powi(2) + (j as f64 - 9.0).powi(2) + (k as f64 - 8.0).powi(2)) / 6.0;
                    p0[(i * 18 + j) * 16 + k] = (-r2).exp();
                }
            }
        }
        let mut pml = PmlSolver::new(shape, 3, h, dt, c2.clone(), p0.clone(), &Layer { cells: 0, sigma_max: 0.0 });
        let st = Stencil {
            shape,
            strides: [18 * 16, 16, 1],
            axes: 3,
            inv_h2: [1.0 / (h[0] * h[0]); 3],
            c2dt2: c2.iter().map(|c| c * dt * dt).collect(),
            damp: None,
            runs: box_runs(shape, 3, 1),
        };
        let mut cur = st.start_from_rest(&p0);
        let mut prev = p0;
        for _ in 0..60 {
            st.step(&mut prev, &cur);
            std::mem::swap(&mut prev, &mut cur);
            pml.step();
        }
        let err = cur.iter().zip(&pml.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "max difference {err}");
    }
}
