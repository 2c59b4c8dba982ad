//! Explicit leapfrog kernel for `p_tt + σ p_t = c² Δp` on a regular lattice.
//!
//! The Laplacian is the 5-point (2D) or 7-point (3D) stencil. Only nodes
//! listed in the active runs are updated; all other nodes keep whatever the
//! caller writes into them (zero, or Dirichlet data).

/// Contiguous flat index ranges `[start, end)` of updated nodes.
pub(crate) type Runs = Vec<(usize, usize)>;

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub shape: [usize; 3],
    pub strides: [usize; 3],
    /// Number of axes carrying the Laplacian (1, 2 or 3).
    pub axes: usize,
    pub inv_h2: [f64; 3],
    /// `(c·dt)²` per node.
    pub c2dt2: Vec<f64>,
    /// `σ·dt/2` per node, absent when there is no damping.
    pub damp: Option<Vec<f64>>,
    pub runs: Runs,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn lap(&self, p: &[f64], i: usize) -> f64 {
        let mut l = 0.0;
        for a in 0..self.axes {
            let s = self.strides[a];
            l += self.inv_h2[a] * (p[i + s] + p[i - s] - 2.0 * p[i]);
        }
        l
    }

    /// One leapfrog step. On entry `prev_next` holds `p^{n-1}`, on exit
    /// `p^{n+1}`; `cur` is `p^n`. Running the same step with the roles of
    /// `p^{n+1}` and `p^{n-1}` exchanged marches backward in time.
    pub fn step(&self, prev_next: &mut [f64], cur: &[f64]) {
        match (&self.damp, self.axes) {
            (None, 3) => {
                let (sx, sy) = (self.strides[0], self.strides[1]);
                let [ax, ay, az] = self.inv_h2;
                for &(s, e) in &self.runs {
                    for i in s..e {
                        let c = cur[i];
                        let l = ax * (cur[i + sx] + cur[i - sx] - 2.0 * c)
                            + ay * (cur[i + sy] + cur[i - sy] - 2.0 * c)
                            + az * (cur[i + 1] + cur[i - 1] - 2.0 * c);
                        prev_next[i] = 2.0 * c - prev_next[i] + self.c2dt2[i] * l;
                    }
                }
            }
            (None, _) => {
                for &(s, e) in &self.runs {
                    for i in s..e {
                        let l = self.lap(cur, i);
                        prev_next[i] = 2.0 * cur[i] - prev_next[i] + self.c2dt2[i] * l;
                    }
                }
            }
            (Some(d), _) => {
                for &(s, e) in &self.runs {
                    for i in s..e {
                        let l = self.lap(cur, i);
                        let g = d[i];
                        prev_next[i] = (2.0 * cur[i] - (1.0 - g) * prev_next[i] + self.c2dt2[i] * l) / (1.0 + g);
                    }
                }
            }
        }
    }

    /// First step from rest: `p^1 = p^0 + ½(c dt)² Δp^0`.
    pub fn start_from_rest(&self, p0: &[f64]) -> Vec<f64> {
        let mut p1 = p0.to_vec();
        for &(s, e) in &self.runs {
            for i in s..e {
                p1[i] = p0[i] + 0.5 * self.c2dt2[i] * self.lap(p0, i);
            }
        }
        p1
    }

    /// Staggered discrete energy between levels `a = p^n` and `b = p^{n+1}`:
    /// `½ Σ (b−a)²/(c dt)² + ½ Σ_edges (D b)(D a)`, per unit cell volume.
    /// Exactly conserved by [`Stencil::step`] without damping when nodes
    /// outside the runs stay fixed at zero.
    pub fn energy(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut kin = 0.0;
        let mut pot = 0.0;
        let mut active = vec![false; self.len()];
        for &(s, e) in &self.runs {
            for i in s..e {
                active[i] = true;
                let d = b[i] - a[i];
                kin += d * d / self.c2dt2[i];
            }
        }
        // Every edge touching an active node, counted once.
        for &(s, e) in &self.runs {
            for i in s..e {
                for ax in 0..self.axes {
                    let st = self.strides[ax];
                    let j = i + st;
                    pot += self.inv_h2[ax] * (b[j] - b[i]) * (a[j] - a[i]);
                    let k = i - st;
                    if !active[k] {
                        pot += self.inv_h2[ax] * (b[i] - b[k]) * (a[i] - a[k]);
                    }
                }
            }
        }
        0.5 * (kin + pot)
    }
}

/// Runs covering every node at least `border` nodes away from the lattice
/// edge along each Laplacian axis.
pub(crate) fn box_runs(shape: [usize; 3], axes: usize, border: usize) -> Runs {
    let strides = [shape[1] * shape[2], shape[2], 1];
    let lo = |a: usize| if a < axes { border } else { 0 };
    let hi = |a: usize| if a < axes { shape[a] - border } else { shape[a] };
    let mut runs = Vec::new();
    for i in lo(0)..hi(0) {
        for j in lo(1)..hi(1) {
            if axes == 3 {
                let base = i * strides[0] + j * strides[1];
                runs.push((base + lo(2), base + hi(2)));
            } else if axes == 2 {
                // 2D lattices have a trivial third axis
                let base = i * strides[0] + j * strides[1];
                runs.push((base, base + 1));
            }
        }
        if axes == 1 {
            // contiguous over the first axis only when the others are trivial
            runs.push((i * strides[0], i * strides[0] + 1));
        }
    }
    merge_runs(runs)
}

/// Runs for an arbitrary boolean mask.
pub(crate) fn mask_runs(mask: &[bool]) -> Runs {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len()));
    }
    runs
}

fn merge_runs(runs: Runs) -> Runs {
    let mut out: Runs = Vec::with_capacity(runs.len());
    for (s, e) in runs {
        match out.last_mut() {
            Some(last) if last.1 == s => last.1 = e,
            _ => out.push((s, e)),
        }
    }
    out
}
