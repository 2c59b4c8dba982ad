//! Thermo-/photoacoustic tomography: phantoms, forward wave simulation,
//! three reconstruction families, synthetic focusing and a small
//! acousto-electric conductivity demo.

// `!(x > 0.0)` is the NaN-rejecting form used throughout input checks, and
// index loops mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aet;
pub mod dst;
pub mod error;
pub mod fbp;
pub mod focusing;
pub mod forward;
pub mod grid;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod quadrature;
pub mod series;
pub mod sinogram;
pub mod surface;
pub mod timereversal;
pub(crate) mod pml;
pub(crate) mod wave;

pub use error::{Error, Result};
pub use fbp::{filter_radial, reconstruct_fbp, FbpVariant};
pub use forward::{means_from_pressure, pressure_from_means, solve_wave_forward, spherical_mean_transform};
pub use grid::{GridSpec, Point, ScalarField};
pub use phantom::{rasterize_phantom, PhantomDescriptor, Primitive};
pub use sinogram::{Sinogram, SinogramKind};
pub use surface::{ObservationSurface, SurfaceSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
