//! Ordinary least squares of accuracy against hardness, the
//! first-quadrant area under the fitted line, and Pearson correlation.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// OLS fit of `accuracy% = intercept + slope * omega`.
///
/// `area` is the integral of the line, clipped to `[0, 100]`, from
/// `omega = 0` to its positive x-intercept. It is `None` (with
/// `area_defined = false` in serialized form) for non-negative slopes,
/// where the line never comes down to the axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub intercept: f64,
    pub slope: f64,
    pub area: Option<f64>,
    pub n: usize,
    pub residual_rms: f64,
}

/// Fits the hardness curve. Points are `(omega, accuracy_percent)`.
/// Requires at least two distinct abscissae.
pub fn fit_hardness_curve(points: &[(f64, f64)]) -> Result<RegressionFit> {
    if points.len() < 2 {
        return Err(Error::Contract {
            op: "fit_hardness_curve",
            detail: format!("need >= 2 points, got {}", points.len()),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract {
            op: "fit_hardness_curve",
            detail: "all omegas equal; degenerate fit".into(),
        });
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let residual_rms = (ss_res / n).sqrt();
    Ok(RegressionFit {
        intercept,
        slope,
        area: first_quadrant_area(intercept, slope),
        n: points.len(),
        residual_rms,
    })
}

/// Area in the first quadrant under `y = a + b x` with `y` clipped to
/// `[0, 100]`: integrates from 0 to the positive x-intercept. Zero when
/// the line starts at or below the axis; undefined for `b >= 0`.
fn first_quadrant_area(a: f64, b: f64) -> Option<f64> {
    if b >= 0.0 {
        return None;
    }
    if a <= 0.0 {
        return Some(0.0);
    }
    let x_intercept = -a / b;
    if a <= 100.0 {
        // Triangle from (0, a) down to (x_intercept, 0).
        return Some(a * x_intercept / 2.0);
    }
    // Clipped at 100 until the line crosses it, then a triangle.
    let x_cross = (a - 100.0) / -b;
    Some(100.0 * x_cross + 100.0 * (x_intercept - x_cross) / 2.0)
}

/// Pearson correlation of `(omega, accuracy)` points. Needs at least 3
/// points and non-degenerate variance in both coordinates.
pub fn correlate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Contract {
            op: "correlate",
            detail: format!("need >= 3 points, got {}", points.len()),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Contract {
            op: "correlate",
            detail: "zero variance in a coordinate".into(),
        });
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    Ok(sxy / (sxx * syy).sqrt())
}
