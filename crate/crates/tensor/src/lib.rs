//! Reverse-mode automatic differentiation over dense real tensors, with the
//! primitive set needed by a convolutional audio codec and a causal
//! transformer, plus Adam.

mod adam;
mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
mod params;
mod real;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, LrSchedule};
pub use error::{Result, TensorError};
pub use gradcheck::{check_gradients, GradCase, GradCheckReport};
pub use graph::{Graph, Var};
pub use ops::{Conv1dAttrs, OpAttrs, OpKind, StftAttrs, WindowKind};
pub use params::{Bound, ParamId, ParamSet};
pub use real::Real;
pub use tensor::Tensor;

/// Scalar GELU (tanh approximation) and its derivative, for forward-only code.
pub mod activation {
    pub use crate::ops::{gelu, gelu_grad};
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    ops::softmax_row(row)
}
