//! Histology-style transfer for confocal laser endomicroscopy (CLE) images.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense single-precision kernels (convolution, ReLU, pooling,
//!   Gram matrices) with their input-gradient counterparts.
//! - [`vgg`]: the frozen VGG-19 prefix through `relu5_1`, its binary weight
//!   file, named feature taps and pixel pre/de-processing.
//! - [`lbfgs`]: a limited-memory BFGS minimizer with a strong-Wolfe line
//!   search and box projection.
//! - [`style`]: content/style representations, the combined loss and its
//!   pixel gradient, and the full optimization run.
//! - [`image`]: decode/encode, center crop and the four color codings.
//! - [`evaluation`]: the two-property 0-6 score model, aggregates and tests.
//! - [`service`]: the HTTP review service that collects rater scores.

pub mod error;
pub mod evaluation;
pub mod image;
pub mod lbfgs;
pub mod service;
pub mod style;
pub mod tensor;
pub mod vgg;

pub use error::{Error, Result};
