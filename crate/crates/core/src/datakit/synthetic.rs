//! Synthetic Gaussian-blob datasets.

use super::{rng, Dataset};
use crate::{Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameters of a synthetic dataset: `n_classes` isotropic Gaussian
/// blobs in `dim` dimensions. `center_scale` controls inter-class
/// spread, `noise_sigma` intra-class spread; their ratio sets the
/// difficulty of episodes sampled from the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Config(
                "synthetic spec requires positive counts".into(),
            ));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(Error::Config("noise_sigma must be > 0".into()));
        }
        if !(self.center_scale >= 0.0) {
            return Err(Error::Config("center_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Generates the dataset. Fully determined by `spec.seed`.
///
/// Draw order, per class k = 0..n_classes-1: `dim` standard normals for
/// the center (scaled by `center_scale`), then `samples_per_class * dim`
/// standard normals for the sample noise (scaled by `noise_sigma`).
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "synthetic");
    let mut draw = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut classes = Vec::with_capacity(spec.n_classes);
    for k in 0..spec.n_classes {
        let center: Vec<f64> = (0..spec.dim).map(|_| spec.center_scale * draw()).collect();
        let samples: Vec<Vec<f64>> = (0..spec.samples_per_class)
            .map(|_| {
                center
                    .iter()
                    .map(|&c| c + spec.noise_sigma * draw())
                    .collect()
            })
            .collect();
        classes.push((k as u32, samples));
    }
    Dataset::new(
        format!("synthetic-{}x{}", spec.n_classes, spec.dim),
        spec.dim,
        classes,
    )
}
