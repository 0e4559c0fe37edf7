//! Reporting methodology: the episode hardness score, accuracy summary
//! statistics, and the hardness-vs-accuracy regression with its
//! first-quadrant area.

mod hardness;
mod regression;
mod stats;

pub use hardness::{hardness, Extractor, HardnessScore, ReferenceExtractor, HARDNESS_PROB_CLAMP};
pub use regression::{correlate, fit_hardness_curve, RegressionFit};
pub use stats::{summarize, SummaryStats};
