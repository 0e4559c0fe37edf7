//! In-memory dataset and disjoint class splits.

use super::rng;
use crate::{Error, Result};

/// A labeled vector dataset: per class id, a list of feature vectors of
/// a common dimensionality. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    class_ids: Vec<u32>,
    samples: Vec<Vec<Vec<f64>>>, // parallel to class_ids
}

impl Dataset {
    pub fn new(name: String, dim: usize, classes: Vec<(u32, Vec<Vec<f64>>)>) -> Result<Self> {
        let mut class_ids = Vec::with_capacity(classes.len());
        let mut samples = Vec::with_capacity(classes.len());
        for (id, vecs) in classes {
            if class_ids.contains(&id) {
                return Err(Error::Contract {
                    op: "dataset_new",
                    detail: format!("duplicate class id {id}"),
                });
            }
            if vecs.is_empty() {
                return Err(Error::Contract {
                    op: "dataset_new",
                    detail: format!("class {id} has no samples"),
                });
            }
            for v in &vecs {
                if v.len() != dim {
                    return Err(Error::ShapeMismatch {
                        op: "dataset_new",
                        detail: format!("class {id} sample of length {}, expected {dim}", v.len()),
                    });
                }
            }
            class_ids.push(id);
            samples.push(vecs);
        }
        Ok(Self {
            name,
            dim,
            class_ids,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn samples_of(&self, class_id: u32) -> Result<&[Vec<f64>]> {
        let idx = self
            .class_ids
            .iter()
            .position(|&c| c == class_id)
            .ok_or_else(|| Error::Contract {
                op: "samples_of",
                detail: format!("class {class_id} not in dataset"),
            })?;
        Ok(&self.samples[idx])
    }

    pub fn iter_classes(&self) -> impl Iterator<Item = (u32, &[Vec<f64>])> {
        self.class_ids
            .iter()
            .copied()
            .zip(self.samples.iter().map(|s| s.as_slice()))
    }
}

/// Train/val/test fractions; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let total = self.train + self.val + self.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {total}, expected 1"
            )));
        }
        if self.train <= 0.0 || self.val < 0.0 || self.test <= 0.0 {
            return Err(Error::Config(
                "train and test fractions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Pairwise-disjoint class partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSplit {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl ClassSplit {
    /// Deterministic shuffled partition of the dataset's class ids.
    ///
    /// Draw order: the sorted class-id list is Fisher-Yates shuffled
    /// once with the `"split"` stream of `seed`, then cut into
    /// train/val/test runs. Counts are rounded, with test taking the
    /// remainder.
    pub fn new(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Self> {
        fractions.validate()?;
        let n = dataset.n_classes();
        let n_train = (n as f64 * fractions.train).round() as usize;
        let n_val = (n as f64 * fractions.val).round() as usize;
        if n_train == 0 || n_train + n_val >= n {
            return Err(Error::Config(format!(
                "{n} classes cannot be split {fractions:?} with non-empty train and test parts"
            )));
        }
        let mut ids: Vec<u32> = dataset.class_ids().to_vec();
        ids.sort_unstable();
        let mut rng = rng::stream(seed, "split");
        rng::shuffle(&mut ids, &mut rng);
        let mut split = ClassSplit {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        };
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        Ok(split)
    }

    /// Union of train and val classes, for the (train + val)
    /// pre-training pool.
    pub fn train_plus_val(&self) -> Vec<u32> {
        let mut pool: Vec<u32> = self.train.iter().chain(&self.val).copied().collect();
        pool.sort_unstable();
        pool
    }
}
