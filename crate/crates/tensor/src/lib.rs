//! Minimal dense tensor library with tape-based reverse-mode differentiation.
//!
//! The op set covers exactly what small sequence models need: batched matmul,
//! elementwise math, norms, a causal depthwise convolution, an online-softmax
//! attention kernel, a fused selective scan, and the loss heads. Training runs
//! in `f32`; gradient verification runs the same code in `f64`.

mod error;
mod scalar;
mod tensor;

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod optim;

pub use error::{Result, TensorError};
pub use scalar::Real;
pub use tensor::{grad_enabled, no_grad, Tensor};
