//! Phantom descriptors and their rasterization onto a grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point, ScalarField};

/// Gaussians are truncated at this many widths from the center.
pub const GAUSSIAN_CUTOFF: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Ball { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// `amplitude · exp(-|x - center|² / (2 width²))`, cut off at
    /// [`GAUSSIAN_CUTOFF`] widths.
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64 },
}

impl Primitive {
    fn center(&self) -> &[f64] {
        match self {
            Primitive::Ball { center, .. } | Primitive::Gaussian { center, .. } => center,
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            Primitive::Ball { amplitude, .. } | Primitive::Gaussian { amplitude, .. } => *amplitude,
        }
    }

    fn support_radius(&self, ramp: f64) -> f64 {
        match self {
            Primitive::Ball { radius, .. } => radius + 0.5 * ramp,
            Primitive::Gaussian { width, .. } => GAUSSIAN_CUTOFF * width,
        }
    }

    /// Unit-amplitude profile at distance `r` from the center.
    fn profile(&self, r: f64, ramp: f64) -> f64 {
        match self {
            Primitive::Ball { radius, .. } => {
                if ramp > 0.0 {
                    (0.5 - (r - radius) / ramp).clamp(0.0, 1.0)
                } else if r <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Primitive::Gaussian { width, .. } => {
                if r > GAUSSIAN_CUTOFF * width {
                    0.0
                } else {
                    (-r * r / (2.0 * width * width)).exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomDescriptor {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub background: f64,
    /// One-cell linear ramp across ball edges.
    #[serde(default = "default_true")]
    pub smooth_edges: bool,
}

fn default_true() -> bool {
    true
}

impl PhantomDescriptor {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        PhantomDescriptor { primitives, background: 0.0, smooth_edges: true }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let d = grid.dim();
        let ramp = if self.smooth_edges { grid.min_spacing() } else { 0.0 };
        let (lo, hi) = grid.bounds();
        if !self.background.is_finite() {
            return Err(Error::InvalidArgument("background must be finite".into()));
        }
        for (index, p) in self.primitives.iter().enumerate() {
            let bad = |reason: String| Error::Primitive { index, reason };
            if p.center().len() != d {
                return Err(bad(format!("center has {} coordinates, grid is {d}D", p.center().len())));
            }
            match p {
                Primitive::Ball { radius, .. } if !(*radius > 0.0) => {
                    return Err(bad(format!("radius {radius} must be positive")))
                }
                Primitive::Gaussian { width, .. } if !(*width > 0.0) => {
                    return Err(bad(format!("width {width} must be positive")))
                }
                _ => {}
            }
            if !p.amplitude().is_finite() || p.center().iter().any(|c| !c.is_finite()) {
                return Err(bad("non-finite parameter".into()));
            }
            let s = p.support_radius(ramp);
            for a in 0..d {
                let c = p.center()[a];
                if !(c - s > lo[a] && c + s < hi[a]) {
                    return Err(bad(format!(
                        "support [{:.4}, {:.4}] on axis {a} leaves the grid box [{:.4}, {:.4}]",
                        c - s,
                        c + s,
                        lo[a],
                        hi[a]
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn rasterize_phantom(desc: &PhantomDescriptor, grid: &GridSpec) -> Result<ScalarField> {
    grid.validate()?;
    desc.validate(grid)?;
    let ramp = if desc.smooth_edges { grid.min_spacing() } else { 0.0 };
    let mut field = ScalarField::constant(grid.clone(), desc.background, "phantom");
    for p in &desc.primitives {
        let mut c: Point = [0.0; 3];
        c[..grid.dim()].copy_from_slice(p.center());
        let amp = p.amplitude();
        for (i, v) in field.values.iter_mut().enumerate() {
            let x = grid.node_at(i);
            let r = crate::grid::dist(&x, &c);
            *v += amp * p.profile(r, ramp);
        }
    }
    Ok(field)
}
