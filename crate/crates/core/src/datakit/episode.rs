//! N-way K-shot episode sampling and batch augmentation.

use super::rng::shuffle;
use super::Dataset;
use crate::ndgrad::Tensor;
use crate::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// One few-shot task: a labeled support set and a query set over `way`
/// classes drawn from a dataset split. Labels are relabeled to
/// `0..way-1` in ascending class-id order; `class_ids[label]` recovers
/// the global id.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub way: u32,
    pub support_shot: u32,
    pub query_shot: u32,
    pub class_ids: Vec<u32>,
    pub support: Vec<(Vec<f64>, u32)>,
    pub query: Vec<(Vec<f64>, u32)>,
    pub seed: u64,
}

impl Episode {
    pub fn dim(&self) -> usize {
        self.support.first().map_or(0, |(v, _)| v.len())
    }

    /// Support inputs as an `(way * s, dim)` matrix, in stored order.
    pub fn support_matrix(&self) -> Tensor {
        matrix_of(&self.support)
    }

    pub fn query_matrix(&self) -> Tensor {
        matrix_of(&self.query)
    }

    pub fn support_labels(&self) -> Vec<u32> {
        self.support.iter().map(|(_, y)| *y).collect()
    }

    pub fn query_labels(&self) -> Vec<u32> {
        self.query.iter().map(|(_, y)| *y).collect()
    }

    fn check(&self) -> Result<()> {
        let way = self.way as usize;
        if self.class_ids.len() != way
            || self.support.len() != way * self.support_shot as usize
            || self.query.len() != way * self.query_shot as usize
        {
            return Err(Error::Contract {
                op: "episode",
                detail: "cardinalities do not match way/shot metadata".into(),
            });
        }
        Ok(())
    }
}

fn matrix_of(samples: &[(Vec<f64>, u32)]) -> Tensor {
    let rows: Vec<Vec<f64>> = samples.iter().map(|(v, _)| v.clone()).collect();
    Tensor::from_rows(&rows).expect("episode rows have a common dimension")
}

/// Samples one episode from the classes in `part` (a split's class-id
/// list), fully determined by `seed`.
///
/// Draw order: the sorted candidate list is shuffled once and the first
/// `way` entries are kept (then sorted ascending to fix the label
/// order); afterwards, for each selected class in label order, its
/// sample indices are shuffled once and the first `s` become support,
/// the next `q` queries. `q = 0` is allowed for support-only episodes.
pub fn sample_episode(
    dataset: &Dataset,
    part: &[u32],
    way: u32,
    support_shot: u32,
    query_shot: u32,
    seed: u64,
) -> Result<Episode> {
    if way == 0 || support_shot == 0 {
        return Err(Error::Sampling(
            "way and support_shot must be at least 1".into(),
        ));
    }
    if (way as usize) > part.len() {
        return Err(Error::Sampling(format!(
            "cannot sample {way} ways from a {}-class split",
            part.len()
        )));
    }
    let mut candidates: Vec<u32> = part.to_vec();
    candidates.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut candidates, &mut rng);
    let mut class_ids: Vec<u32> = candidates[..way as usize].to_vec();
    class_ids.sort_unstable();

    let per_class = (support_shot + query_shot) as usize;
    let mut support = Vec::with_capacity(way as usize * support_shot as usize);
    let mut query = Vec::with_capacity(way as usize * query_shot as usize);
    for (label, &class_id) in class_ids.iter().enumerate() {
        let samples = dataset.samples_of(class_id)?;
        if samples.len() < per_class {
            return Err(Error::Sampling(format!(
                "class {class_id} has {} samples, needs {per_class} for s={support_shot}, q={query_shot}",
                samples.len()
            )));
        }
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        shuffle(&mut idx, &mut rng);
        for &i in &idx[..support_shot as usize] {
            support.push((samples[i].clone(), label as u32));
        }
        for &i in &idx[support_shot as usize..per_class] {
            query.push((samples[i].clone(), label as u32));
        }
    }

    let episode = Episode {
        way,
        support_shot,
        query_shot,
        class_ids,
        support,
        query,
        seed,
    };
    episode.check()?;
    Ok(episode)
}

/// Adds i.i.d. Gaussian noise of scale `sigma` to every input; labels
/// are untouched. `sigma = 0` is the identity and consumes no draws.
pub fn augment(inputs: &Tensor, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor {
    if sigma == 0.0 {
        return inputs.clone();
    }
    let normal = StandardNormal;
    let mut out = inputs.clone();
    for v in out.data_mut() {
        let n: f64 = normal.sample(rng);
        *v += sigma * n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{make_synthetic, rng, SyntheticSpec};

    fn dataset() -> Dataset {
        make_synthetic(&SyntheticSpec {
            n_classes: 20,
            dim: 8,
            samples_per_class: 30,
            center_scale: 2.0,
            noise_sigma: 0.4,
            seed: 17,
        })
        .unwrap()
    }

    #[test]
    fn one_shot_fifteen_query_cardinalities() {
        let ds = dataset();
        let e = sample_episode(&ds, ds.class_ids(), 5, 1, 15, 0).unwrap();
        assert_eq!(e.support.len(), 5);
        assert_eq!(e.query.len(), 75);
    }

    #[test]
    fn five_shot_cardinalities() {
        let ds = dataset();
        let e = sample_episode(&ds, ds.class_ids(), 5, 5, 15, 0).unwrap();
        assert_eq!(e.support.len(), 25);
        assert_eq!(e.query.len(), 75);
    }

    #[test]
    fn equal_seeds_give_identical_episodes() {
        let ds = dataset();
        let a = sample_episode(&ds, ds.class_ids(), 5, 1, 15, 123).unwrap();
        let b = sample_episode(&ds, ds.class_ids(), 5, 1, 15, 123).unwrap();
        assert_eq!(a, b);
        let c = sample_episode(&ds, ds.class_ids(), 5, 1, 15, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn label_histograms_are_balanced_and_disjoint() {
        let ds = dataset();
        for seed in 0..50 {
            let e = sample_episode(&ds, ds.class_ids(), 5, 3, 7, seed).unwrap();
            let mut s_hist = vec![0usize; 5];
            let mut q_hist = vec![0usize; 5];
            for (_, y) in &e.support {
                s_hist[*y as usize] += 1;
            }
            for (_, y) in &e.query {
                q_hist[*y as usize] += 1;
            }
            assert!(s_hist.iter().all(|&c| c == 3));
            assert!(q_hist.iter().all(|&c| c == 7));
            // Per-class support/query disjointness: vectors are distinct
            // draws, so no support vector may reappear as a query.
            for (sv, sy) in &e.support {
                for (qv, qy) in &e.query {
                    if sy == qy {
                        assert_ne!(sv, qv, "support/query overlap in class {sy}");
                    }
                }
            }
        }
    }

    #[test]
    fn insufficient_samples_error_names_the_class() {
        let ds = dataset();
        let err = sample_episode(&ds, ds.class_ids(), 5, 20, 15, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("needs 35"), "unexpected message: {msg}");
    }

    #[test]
    fn way_larger_than_split_errors() {
        let ds = dataset();
        assert!(sample_episode(&ds, &ds.class_ids()[..4], 5, 1, 1, 0).is_err());
    }

    #[test]
    fn class_coverage_is_binomial_over_many_episodes() {
        let ds = dataset();
        let n_episodes = 10_000usize;
        let mut counts = vec![0usize; 20];
        for i in 0..n_episodes {
            let e = sample_episode(&ds, ds.class_ids(), 5, 1, 1, i as u64).unwrap();
            for c in &e.class_ids {
                counts[*c as usize] += 1;
            }
        }
        let p = 5.0 / 20.0;
        let mean = n_episodes as f64 * p;
        let sigma = (n_episodes as f64 * p * (1.0 - p)).sqrt();
        for (c, &n) in counts.iter().enumerate() {
            let dev = (n as f64 - mean).abs();
            assert!(
                dev < 5.0 * sigma,
                "class {c} selected {n} times, {dev:.1} from expectation (5 sigma = {:.1})",
                5.0 * sigma
            );
        }
    }

    #[test]
    fn augment_zero_sigma_is_identity() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut r = rng::stream(0, "augment");
        assert_eq!(augment(&x, 0.0, &mut r), x);
    }

    #[test]
    fn augment_preserves_shape_and_is_reproducible() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let a = augment(&x, 0.5, &mut rng::stream(9, "augment"));
        let b = augment(&x, 0.5, &mut rng::stream(9, "augment"));
        assert_eq!(a.shape(), x.shape());
        assert_eq!(a, b);
        assert_ne!(a, x);
    }
}
