//! Minimal dense-tensor reverse-mode differentiation engine.
//!
//! A [`Tape`] records each primitive's output together with whatever the
//! backward pass needs; [`Tape::backward`] sweeps the record in reverse.
//! Only the primitives the fusion network uses are provided.

pub mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
