//! Audio spectrogram mixer with roll-time and Hermitian-FFT mixing.
//!
//! The crate is generic over the element type (`f32` or `f64`); the aliases
//! below name the two concrete instantiations used in practice.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod frontend;
pub mod mixer;
pub mod oracle;
pub mod scalar;
pub mod run;
pub mod selftest;
pub mod spectral;
pub mod tensor;
pub mod toy;
pub mod train;

pub use autodiff::{Tape, Var};
pub use error::{Error, ErrorKind, Result};
pub use mixer::{Model, ModelConfig, Variant};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Model32 = mixer::Model<f32>;
pub type Model64 = mixer::Model<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Tape64 = autodiff::Tape<f64>;
