//! Minimal reverse-mode automatic differentiation over dense `f64`
//! tensors, plus the optimizers and learning-rate schedules used by the
//! training procedures in this crate.
//!
//! The engine is deliberately small: a [`Tape`] records eagerly-evaluated
//! operations in topological order; [`Tape::backward`] consumes the tape
//! and returns one gradient per `requires_grad` leaf. Graphs are
//! throwaway values rebuilt every optimization step.

mod optim;
mod schedule;
mod tape;
mod tensor;

pub use optim::{Optimizer, OptimizerKind, Param};
pub use schedule::{Cycle, LrSchedule};
pub use tape::{BatchNormMode, BatchStats, Gradients, NodeId, Tape};
pub use tensor::Tensor;

use crate::{Error, Result};

/// Arguments of `log` and division denominators are clamped to this
/// floor; probabilities inside entropy terms likewise.
pub const EPS_LOG: f64 = 1e-12;

/// Added under the square root in `l2_normalize` so the zero vector maps
/// to the zero vector instead of NaN.
pub const EPS_NORM: f64 = 1e-12;

/// Batch normalization variance epsilon.
pub const EPS_BATCHNORM: f64 = 1e-5;

/// Shannon entropy of a probability vector, natural log, with the
/// `0 * log 0 = 0` convention.
///
/// Entries must be non-negative and sum to 1 within 1e-6.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Contract {
            op: "shannon_entropy",
            detail: "empty probability vector".into(),
        });
    }
    let mut sum = 0.0;
    for (i, &v) in p.iter().enumerate() {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Domain {
                op: "shannon_entropy",
                detail: format!("entry {i} is {v}, expected a probability"),
            });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Domain {
            op: "shannon_entropy",
            detail: format!("entries sum to {sum}, expected 1 within 1e-6"),
        });
    }
    Ok(p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum())
}
