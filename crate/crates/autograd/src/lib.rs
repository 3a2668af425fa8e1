//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The op set is what convolutional encoder/decoder stacks and (convolutional)
//! LSTMs need: strided and transposed convolutions, matmul, gate
//! nonlinearities, channel concat/slice and a few layout ops. Every value is
//! recorded on a [`Tape`]; [`Tape::backward`] sweeps it once in reverse.

pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use params::{Bound, Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
