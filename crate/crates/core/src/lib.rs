//! Variation networks: conditional autoencoders whose decoder is steered by
//! learned attribute vectors, trained adversarially so that templates stay
//! independent of the attributes.

pub mod attributes;
pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod conv;
pub mod data;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod probe;
pub mod sampling;
pub mod tensor;
pub mod training;

pub use error::{Result, VarNetError};
pub use tensor::Tensor;
