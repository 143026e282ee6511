//! Low-level kernels shared by the model modules: a row-major matrix,
//! direct 2-D convolutions, activations and seeded sampling.

mod activation;
mod conv;
mod matrix;
mod rng;

pub use activation::{log_sum_exp, sigmoid, softmax};
pub use conv::{conv2d_full, conv2d_full_acc, conv2d_valid, conv2d_valid_acc};
pub use matrix::Matrix2;
pub use rng::{sample_bernoulli, sample_categorical, sample_gaussian, RngStream};
