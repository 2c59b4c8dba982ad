//! Closed observation surfaces carrying detector positions, outward normals
//! and quadrature weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point};
use crate::quadrature::{circle_rule, sphere_rule, trapezoid_weights};

/// Generating description of a surface; enough to rebuild every detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SurfaceSpec {
    /// Sphere (3D) or circle (2D). In 3D `n_polar` Gauss-Legendre rings of
    /// `2·n_polar` detectors each; in 2D `n_polar` equispaced detectors.
    Sphere { center: Vec<f64>, radius: f64, n_polar: usize },
    /// Boundary of the box `[lo, hi]` sampled by a lattice of `n[a]` nodes
    /// per axis, edges included. Each face carries its own copy of the
    /// shared edge nodes.
    Cube { lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSurface {
    pub spec: SurfaceSpec,
    pub dim: usize,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
    /// For cubes: `2·axis + side` of the face each detector belongs to.
    pub faces: Vec<u8>,
}

impl ObservationSurface {
    pub fn sphere(center: &[f64], radius: f64, n_polar: usize) -> Result<Self> {
        Self::from_spec(SurfaceSpec::Sphere { center: center.to_vec(), radius, n_polar })
    }

    /// Cube surface whose detectors coincide with the boundary nodes of `grid`.
    pub fn cube_on_grid(grid: &GridSpec) -> Result<Self> {
        let (lo, hi) = grid.bounds();
        let d = grid.dim();
        Self::from_spec(SurfaceSpec::Cube {
            lo: lo[..d].to_vec(),
            hi: hi[..d].to_vec(),
            n: grid.shape.clone(),
        })
    }

    pub fn from_spec(spec: SurfaceSpec) -> Result<Self> {
        match &spec {
            SurfaceSpec::Sphere { center, radius, n_polar } => {
                let dim = center.len();
                if dim != 2 && dim != 3 {
                    return Err(Error::Surface(format!("sphere center must have 2 or 3 coordinates, got {dim}")));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Surface(format!("radius {radius} must be positive")));
                }
                if *n_polar < 4 {
                    return Err(Error::Surface(format!("need at least 4 polar samples, got {n_polar}")));
                }
                let mut c = [0.0; 3];
                c[..dim].copy_from_slice(center);
                let (dirs, w) = if dim == 3 { sphere_rule(*n_polar) } else { circle_rule(*n_polar) };
                let scale = if dim == 3 { radius * radius } else { *radius };
                let points = dirs
                    .iter()
                    .map(|d| [c[0] + radius * d[0], c[1] + radius * d[1], c[2] + radius * d[2]])
                    .collect();
                let n = dirs.len();
                Ok(ObservationSurface {
                    spec: spec.clone(),
                    dim,
                    points,
                    normals: dirs,
                    weights: w.iter().map(|w| w * scale).collect(),
                    faces: vec![0; n],
                })
            }
            SurfaceSpec::Cube { lo, hi, n } => {
                let dim = lo.len();
                if (dim != 2 && dim != 3) || hi.len() != dim || n.len() != dim {
                    return Err(Error::Surface("cube lo/hi/n must all have 2 or 3 entries".into()));
                }
                for a in 0..dim {
                    if !(hi[a] > lo[a]) {
                        return Err(Error::Surface(format!("axis {a}: hi must exceed lo")));
                    }
                    if n[a] < 3 {
                        return Err(Error::Surface(format!("axis {a}: need at least 3 nodes")));
                    }
                }
                let mut points = Vec::new();
                let mut normals = Vec::new();
                let mut weights = Vec::new();
                let mut faces = Vec::new();
                let h: Vec<f64> = (0..dim).map(|a| (hi[a] - lo[a]) / (n[a] - 1) as f64).collect();
                for axis in 0..dim {
                    let others: Vec<usize> = (0..dim).filter(|&b| b != axis).collect();
                    for side in 0..2 {
                        let mut normal = [0.0; 3];
                        normal[axis] = if side == 0 { -1.0 } else { 1.0 };
                        let fixed = if side == 0 { lo[axis] } else { hi[axis] };
                        let face_id = (2 * axis + side) as u8;
                        let wb = trapezoid_weights(n[others[0]], h[others[0]]);
                        if dim == 2 {
                            let b = others[0];
                            for i in 0..n[b] {
                                let mut p = [0.0; 3];
                                p[axis] = fixed;
                                p[b] = lo[b] + i as f64 * h[b];
                                points.push(p);
                                normals.push(normal);
                                weights.push(wb[i]);
                                faces.push(face_id);
                            }
                        } else {
                            let (b, c) = (others[0], others[1]);
                            let wc = trapezoid_weights(n[c], h[c]);
                            for i in 0..n[b] {
                                for j in 0..n[c] {
                                    let mut p = [0.0; 3];
                                    p[axis] = fixed;
                                    p[b] = lo[b] + i as f64 * h[b];
                                    p[c] = lo[c] + j as f64 * h[c];
                                    points.push(p);
                                    normals.push(normal);
                                    weights.push(wb[i] * wc[j]);
                                    faces.push(face_id);
                                }
                            }
                        }
                    }
                }
                Ok(ObservationSurface { spec: spec.clone(), dim, points, normals, weights, faces })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.spec, SurfaceSpec::Sphere { .. })
    }

    pub fn is_cube(&self) -> bool {
        matches!(self.spec, SurfaceSpec::Cube { .. })
    }

    /// Whether `p` lies strictly inside, by at least `margin`.
    pub fn contains(&self, p: &Point, margin: f64) -> bool {
        match &self.spec {
            SurfaceSpec::Sphere { center, radius, .. } => {
                let mut c = [0.0; 3];
                c[..self.dim].copy_from_slice(center);
                crate::grid::dist(p, &c) < radius - margin
            }
            SurfaceSpec::Cube { lo, hi, .. } => {
                (0..self.dim).all(|a| p[a] > lo[a] + margin && p[a] < hi[a] - margin)
            }
        }
    }

    /// Strict enclosure of an axis-aligned box.
    pub fn encloses_box(&self, lo: &Point, hi: &Point) -> bool {
        let d = self.dim;
        let corners = 1usize << d;
        (0..corners).all(|mask| {
            let mut p = [0.0; 3];
            for a in 0..d {
                p[a] = if mask & (1 << a) != 0 { hi[a] } else { lo[a] };
            }
            self.contains(&p, 0.0)
        })
    }

    /// Largest distance from the surface's points to any point of the box.
    pub fn max_distance_to_box(&self, lo: &Point, hi: &Point) -> f64 {
        let d = self.dim;
        self.points
            .iter()
            .map(|y| {
                (0..d)
                    .map(|a| {
                        let e = (y[a] - lo[a]).abs().max((y[a] - hi[a]).abs());
                        e * e
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Check that all detectors sit on the declared surface.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12;
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Surface("quadrature weights must be positive".into()));
        }
        for p in &self.points {
            let ok = match &self.spec {
                SurfaceSpec::Sphere { center, radius, .. } => {
                    let mut c = [0.0; 3];
                    c[..self.dim].copy_from_slice(center);
                    (crate::grid::dist(p, &c) - radius).abs() <= tol * radius.max(1.0)
                }
                SurfaceSpec::Cube { lo, hi, .. } => {
                    let scale = (0..self.dim).map(|a| hi[a] - lo[a]).fold(1.0, f64::max);
                    let inside = (0..self.dim).all(|a| p[a] >= lo[a] - tol * scale && p[a] <= hi[a] + tol * scale);
                    let on = (0..self.dim)
                        .any(|a| (p[a] - lo[a]).abs() <= tol * scale || (p[a] - hi[a]).abs() <= tol * scale);
                    inside && on
                }
            };
            if !ok {
                return Err(Error::Surface(format!("detector {p:?} is off the surface")));
            }
        }
        Ok(())
    }

    /// Sphere center and radius, or an error for other shapes.
    pub fn sphere_params(&self) -> Result<(Point, f64)> {
        match &self.spec {
            SurfaceSpec::Sphere { center, radius, .. } => {
                let mut c = [0.0; 3];
                c[..self.dim].copy_from_slice(center);
                Ok((c, *radius))
            }
            _ => Err(Error::Surface("a spherical observation surface is required".into())),
        }
    }

    pub fn cube_params(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
        match &self.spec {
            SurfaceSpec::Cube { lo, hi, n } => Ok((lo.clone(), hi.clone(), n.clone())),
            _ => Err(Error::Surface("a cube observation surface is required".into())),
        }
    }
}
