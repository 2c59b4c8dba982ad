//! Regular axis-aligned grids and the scalar fields sampled on them.
//!
//! Points are carried as `[f64; 3]` in both dimensions; for 2D grids the
//! third coordinate is ignored and always written as zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let g = GridSpec { shape, spacing, origin };
        g.validate()?;
        Ok(g)
    }

    /// Grid with `n` nodes per axis spanning `[lo, hi]` on every axis,
    /// boundary nodes included.
    pub fn cube(dim: usize, n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes per axis, got {n}")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        GridSpec::new(vec![n; dim], vec![h; dim], vec![lo; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.shape.len();
        if d != 2 && d != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {d}")));
        }
        if self.spacing.len() != d || self.origin.len() != d {
            return Err(Error::InvalidGrid(format!(
                "shape has {d} axes but spacing has {} and origin {}",
                self.spacing.len(),
                self.origin.len()
            )));
        }
        for (a, &n) in self.shape.iter().enumerate() {
            if n < 2 {
                return Err(Error::InvalidGrid(format!("axis {a} has {n} samples, need >= 2")));
            }
        }
        for (a, &h) in self.spacing.iter().enumerate() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidGrid(format!("axis {a} spacing {h} must be positive")));
            }
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape padded to three axes (a 2D grid gets a trailing axis of length 1).
    pub fn shape3(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        s[..self.dim()].copy_from_slice(&self.shape);
        s
    }

    pub fn spacing3(&self) -> [f64; 3] {
        let mut s = [1.0; 3];
        s[..self.dim()].copy_from_slice(&self.spacing);
        s
    }

    pub fn origin3(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        s[..self.dim()].copy_from_slice(&self.origin);
        s
    }

    /// Row-major strides, last axis fastest.
    pub fn strides3(&self) -> [usize; 3] {
        let s = self.shape3();
        [s[1] * s[2], s[2], 1]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        let st = self.strides3();
        idx[0] * st[0] + idx[1] * st[1] + idx[2] * st[2]
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let s = self.shape3();
        [flat / (s[1] * s[2]), (flat / s[2]) % s[1], flat % s[2]]
    }

    pub fn node(&self, idx: [usize; 3]) -> Point {
        let o = self.origin3();
        let h = self.spacing3();
        let mut p = [0.0; 3];
        for a in 0..self.dim() {
            p[a] = o[a] + idx[a] as f64 * h[a];
        }
        p
    }

    pub fn node_at(&self, flat: usize) -> Point {
        self.node(self.multi_index(flat))
    }

    /// Lower and upper corners of the bounding box.
    pub fn bounds(&self) -> (Point, Point) {
        let lo = self.origin3();
        let mut hi = lo;
        for a in 0..self.dim() {
            hi[a] = lo[a] + (self.shape[a] - 1) as f64 * self.spacing[a];
        }
        (lo, hi)
    }

    /// Same lattice with `pad` extra nodes on every side.
    pub fn padded(&self, pad: usize) -> GridSpec {
        GridSpec {
            shape: self.shape.iter().map(|n| n + 2 * pad).collect(),
            spacing: self.spacing.clone(),
            origin: self
                .origin
                .iter()
                .zip(&self.spacing)
                .map(|(o, h)| o - pad as f64 * h)
                .collect(),
        }
    }

    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.shape == other.shape
            && self
                .spacing
                .iter()
                .zip(&other.spacing)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub name: String,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ScalarField { grid, values, name: name.into() })
    }

    pub fn zeros(grid: GridSpec, name: impl Into<String>) -> Self {
        let n = grid.len();
        ScalarField { grid, values: vec![0.0; n], name: name.into() }
    }

    pub fn constant(grid: GridSpec, value: f64, name: impl Into<String>) -> Self {
        let n = grid.len();
        ScalarField { grid, values: vec![value; n], name: name.into() }
    }

    pub fn from_fn(grid: GridSpec, name: impl Into<String>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_at(i))).collect();
        ScalarField { grid, values, name: name.into() }
    }

    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.values[self.grid.flat_index(idx)]
    }

    /// Multilinear interpolation; zero outside the grid.
    pub fn sample(&self, p: Point) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let o = g.origin3();
        let h = g.spacing3();
        let s = g.shape3();
        let st = g.strides3();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let u = (p[a] - o[a]) / h[a];
            if !(u >= 0.0 && u <= (s[a] - 1) as f64) {
                return 0.0;
            }
            let mut i = u.floor() as usize;
            if i >= s[a] - 1 {
                i = s[a] - 2;
            }
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let v = &self.values;
        let b = base[0] * st[0] + base[1] * st[1] + base[2] * st[2];
        if d == 2 {
            let (fx, fy) = (frac[0], frac[1]);
            let v00 = v[b];
            let v01 = v[b + st[1]];
            let v10 = v[b + st[0]];
            let v11 = v[b + st[0] + st[1]];
            (1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11)
        } else {
            let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
            let c = |di: usize, dj: usize, dk: usize| v[b + di * st[0] + dj * st[1] + dk * st[2]];
            let c00 = c(0, 0, 0) * (1.0 - fz) + c(0, 0, 1) * fz;
            let c01 = c(0, 1, 0) * (1.0 - fz) + c(0, 1, 1) * fz;
            let c10 = c(1, 0, 0) * (1.0 - fz) + c(1, 0, 1) * fz;
            let c11 = c(1, 1, 0) * (1.0 - fz) + c(1, 1, 1) * fz;
            let c0 = c00 * (1.0 - fy) + c01 * fy;
            let c1 = c10 * (1.0 - fy) + c11 * fy;
            c0 * (1.0 - fx) + c1 * fx
        }
    }

    /// Discrete integral, node values times cell volume.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bounding box of nodes with `|value| > tol`, or `None` for a field
    /// that vanishes everywhere.
    pub fn support_bounds(&self, tol: f64) -> Option<(Point, Point)> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for (i, v) in self.values.iter().enumerate() {
            if v.abs() > tol {
                any = true;
                let p = self.grid.node_at(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
            name: self.name.clone(),
        }
    }

    /// Elementwise `a·self + b·other` on the same grid.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        if !self.grid.same_lattice(&other.grid) {
            return Err(Error::InvalidField("grid mismatch".into()));
        }
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            name: self.name.clone(),
        })
    }

    /// Resample onto another grid by multilinear interpolation.
    pub fn resample(&self, grid: &GridSpec) -> ScalarField {
        ScalarField::from_fn(grid.clone(), self.name.clone(), |p| self.sample(p))
    }
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
