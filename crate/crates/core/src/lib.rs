//! Desk-scale few-shot classification lab.
//!
//! The crate is organised around the lifecycle of a few-shot experiment:
//!
//! - [`ndgrad`]: a minimal reverse-mode autodiff engine over dense `f64`
//!   tensors, with the SGD-Nesterov / Adam optimizers and cosine
//!   learning-rate cycles the training procedures need.
//! - [`datakit`]: datasets, disjoint class splits, synthetic data
//!   generation, reproducible N-way K-shot episode sampling, and binary
//!   episode/dataset files that round-trip bit-exactly.
//! - [`backbone`]: an MLP backbone (linear / batchnorm / ReLU blocks)
//!   and its cross-entropy pre-training loop with label smoothing and
//!   mixup.
//! - [`adapt`]: support-based classifier initialization, non-transductive
//!   and transductive fine-tuning, and per-episode evaluation.
//! - [`metrics`]: the episode hardness score, accuracy summary
//!   statistics, and the hardness-vs-accuracy regression with its
//!   first-quadrant area.

pub mod adapt;
pub mod backbone;
pub mod datakit;
pub mod error;
pub mod metrics;
pub mod ndgrad;

pub use error::{Error, Result};
