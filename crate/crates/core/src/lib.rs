//! Parallel-MRI reconstruction with data-consistency cascade networks.
//!
//! The crate provides the SENSE encoding operators, Cartesian sampling,
//! coil-sensitivity handling, the two cascade architectures (a recombined
//! image network with encode–replace–recombine consistency, and a
//! calibration-less per-coil network), reverse-mode training, classical
//! baselines, image-quality metrics and a small on-disk dataset format.

pub mod baselines;
pub mod cascade;
pub mod coils;
pub mod data;
pub mod dc;
pub mod denoiser;
pub mod encoding;
pub mod error;
pub mod fft;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
pub use image::{inner_product, CoilStack, ComplexImage, MultiCoilImage, MultiCoilKSpace};
pub use rustfft::num_complex::Complex64;
