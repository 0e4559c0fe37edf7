//! Accuracy summary statistics: mean, sample standard deviation, 95%
//! confidence half-width, and box-plot quantiles with 1.5 IQR whiskers.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample (n-1) standard deviation; 0 for a single observation.
    pub std: f64,
    /// 1.96 * std / sqrt(n).
    pub ci95_half_width: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// q25 - 1.5 IQR and q75 + 1.5 IQR.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

/// Linear-interpolation quantile on a sorted slice: the value at rank
/// `(n - 1) * p`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (n - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Summarizes a list of per-episode accuracies (or any observations).
/// Permutation-invariant; errors on empty input.
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Contract {
            op: "summarize",
            detail: "empty observation list".into(),
        });
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let ci95_half_width = 1.96 * std / (n as f64).sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite observations"));
    let q25 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q75 = quantile_sorted(&sorted, 0.75);
    let iqr = q75 - q25;
    Ok(SummaryStats {
        n,
        mean,
        std,
        ci95_half_width,
        median,
        q25,
        q75,
        whisker_low: q25 - 1.5 * iqr,
        whisker_high: q75 + 1.5 * iqr,
    })
}
