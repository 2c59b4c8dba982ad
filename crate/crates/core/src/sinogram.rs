//! Time-resolved boundary data `g(y, t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::FbpVariant;
use crate::surface::ObservationSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "variant")]
pub enum SinogramKind {
    /// Pressure traces `p(y, t)`.
    Pressure,
    /// Surface integrals of the source over spheres of radius `c·t`.
    SphericalIntegral,
    /// Spherical integrals divided by the sphere area.
    SphericalMean,
    /// Spherical integrals after a backprojection radial filter.
    Filtered(FbpVariant),
}

impl SinogramKind {
    pub fn needs_speed(&self) -> bool {
        !matches!(self, SinogramKind::Pressure)
    }
}

/// Samples `values[i * n_times + j] = g(y_i, j·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub surface: ObservationSurface,
    pub dt: f64,
    pub n_times: usize,
    pub values: Vec<f64>,
    pub kind: SinogramKind,
    pub sound_speed: Option<f64>,
}

impl Sinogram {
    pub fn new(
        surface: ObservationSurface,
        dt: f64,
        n_times: usize,
        values: Vec<f64>,
        kind: SinogramKind,
        sound_speed: Option<f64>,
    ) -> Result<Self> {
        let s = Sinogram { surface, dt, n_times, values, kind, sound_speed };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(surface: ObservationSurface, dt: f64, n_times: usize, kind: SinogramKind, c: Option<f64>) -> Self {
        let n = surface.len() * n_times;
        Sinogram { surface, dt, n_times, values: vec![0.0; n], kind, sound_speed: c }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Sinogram(format!("dt = {} must be positive", self.dt)));
        }
        if self.values.len() != self.surface.len() * self.n_times {
            return Err(Error::Sinogram(format!(
                "{} values for {} detectors x {} times",
                self.values.len(),
                self.surface.len(),
                self.n_times
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if self.kind.needs_speed() {
            match self.sound_speed {
                Some(c) if c > 0.0 && c.is_finite() => {}
                _ => {
                    return Err(Error::Sinogram(format!(
                        "{:?} data require a positive constant sound speed",
                        self.kind
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn n_detectors(&self) -> usize {
        self.surface.len()
    }

    pub fn trace(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn trace_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n_times;
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.n_times.saturating_sub(1)) as f64 * self.dt
    }

    /// Radius step `c·dt` for spherical data.
    pub fn dr(&self) -> Result<f64> {
        self.sound_speed
            .map(|c| c * self.dt)
            .ok_or_else(|| Error::Sinogram("no sound speed recorded".into()))
    }

    /// Root mean square over all samples.
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn with_values(&self, values: Vec<f64>, kind: SinogramKind) -> Sinogram {
        Sinogram {
            surface: self.surface.clone(),
            dt: self.dt,
            n_times: self.n_times,
            values,
            kind,
            sound_speed: self.sound_speed,
        }
    }
}

/// `‖a − b‖ / ‖b‖` over flat sample vectors.
pub fn relative_rms(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}
