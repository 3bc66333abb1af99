//! Dense-tensor reverse-mode automatic differentiation and the optimizers
//! that consume its gradients.
//!
//! The tape is define-by-run and rebuilt for every training step: operations
//! append nodes in topological order, `backward` walks them once in reverse.
//! Everything is `f64`; the workloads this crate cares about are dominated by
//! exact oracles and gradient checks, not raw throughput.

mod fastmath;
pub mod gradcheck;
mod ops;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::GradCheck;
pub use optim::{clip_global_norm, polyak_update, Adam, Param};
pub use tape::{Gradients, Tape};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor operations and optimizers.
#[derive(Debug, Error)]
pub enum DiffError {
    /// Operand shapes incompatible with the requested operation.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Input outside the operation's domain (e.g. `log` of a non-positive value).
    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },
    /// API contract broken (non-scalar loss, tensors from different tapes, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A NaN or infinity showed up where the caller required finite values.
    #[error("non-finite value in {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, DiffError>;
