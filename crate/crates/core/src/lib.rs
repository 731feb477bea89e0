//! Differentiable 3D Gaussian splatting for native high-dynamic-range
//! radiance fields, with a luminance/chromaticity color model, the
//! entangled SH baseline, and Bayer-domain supervision.

pub mod data_io;
pub mod error;
pub mod math;
pub mod optim;
pub mod photometry;
pub mod raster;
pub mod scene;
pub mod sh;

pub use error::{Error, Result};
