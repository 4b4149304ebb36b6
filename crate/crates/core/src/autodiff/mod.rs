//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse. Parameters live in a [`ParamStore`] and are copied onto
//! a fresh tape per step.

mod check;
mod ops;
mod optim;
mod tensor;

pub use check::{gradcheck, rel_diff, GradCheck};
pub use ops::{Grads, Tape, Var};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig, ParamId, ParamStore};
pub use tensor::{gemm, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: index {index} out of range {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0} values do not fill shape {1:?}")]
    BadLength(usize, Vec<usize>),
}
