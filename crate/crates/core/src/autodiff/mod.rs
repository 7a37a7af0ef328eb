//! Reverse-mode automatic differentiation over dense rank-2 `f64` arrays.
//!
//! Graphs are recorded on a [`Tape`] as operations execute and differentiated
//! with [`Tape::backward`]. A fresh tape is built for every training step.
//! Binary elementwise operations broadcast only a `1×1` operand; anything else
//! must match exactly.
//!
//! `relu` uses subgradient 0 at the kink, `clamp` passes gradient only strictly
//! inside its bounds, and `row_norm` uses 0 at the origin. Finite-difference
//! checks near those points are not meaningful.

mod gradcheck;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{grad_check, grad_check_many};
pub use tape::{Axis, Elementwise, GradientMap, Reduction, Tape, Var};
pub use tensor::Tensor;

fn fmt_shape(s: &(usize, usize)) -> String {
    format!("{}×{}", s.0, s.1)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error(
        "{op}: incompatible shapes {} and {}",
        fmt_shape(left),
        fmt_shape(right)
    )]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("tensor {rows}×{cols} needs {} values, got {len}", rows * cols)]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("row of length {found} where {expected} was expected")]
    RaggedRows { expected: usize, found: usize },
    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("expected a 1×1 tensor, got {}", fmt_shape(shape))]
    NotScalar { shape: (usize, usize) },
    #[error("slice {start}..{end} out of bounds for {cols} columns")]
    SliceBounds {
        start: usize,
        end: usize,
        cols: usize,
    },
    #[error("{op}: wrong number of operands")]
    Arity { op: &'static str },
    #[error("gradient check: {0}")]
    GradCheck(String),
}
