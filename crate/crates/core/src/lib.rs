//! Complex-valued 2D Gaussian splatting for computer-generated holography.
//!
//! A hologram is represented by a [`GaussianSet`] that is rasterized into a
//! complex field, propagated to several depth planes with the band-limited
//! angular spectrum method, and fit to a target image with analytic
//! gradients and Adan. The fitted field can then be converted to
//! phase-only holograms.

pub mod complex_field;
pub mod convert;
pub mod error;
pub mod field;
pub mod loss;
pub mod optim;
pub mod pipeline;
pub mod oracles;
pub mod propagation;
pub mod raster;

pub use complex_field::ComplexField;
pub use error::{Error, Result};
pub use field::GaussianSet;
pub use loss::{DepthPlaneSet, Reconstruction, TargetStack};
pub use propagation::{PropagationSpec, Propagator};
