//! Device-free localization with a convolutional deep belief network,
//! an unrolled autoencoder and a softmax grid-cell classifier.
//!
//! Model code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix it to `f64`, the precision used by the pipeline and file formats.

pub mod autoencoder;
pub mod cdbn;
pub mod crbm;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gbrbm;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numerics::Matrix2<f64>;
pub type GbRbm = gbrbm::GbRbm<f64>;
pub type Crbm = crbm::Crbm<f64>;
pub type CdbnStack = cdbn::CdbnStack<f64>;
pub type AutoencoderNet = autoencoder::AutoencoderNet<f64>;
pub type SoftmaxHead = autoencoder::SoftmaxHead<f64>;
