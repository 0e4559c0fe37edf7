//! Episode hardness: the mean log-odds of a query being misclassified
//! by a support-anchored cosine-softmax clustering under a reference
//! feature extractor.

use crate::adapt::{head_from_outputs, HeadInput};
use crate::backbone::BackboneParams;
use crate::datakit::Episode;
use crate::ndgrad::{Tape, Tensor};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Probability clamp inside the log-odds; bounds the score to about
/// +/- 27.6.
pub const HARDNESS_PROB_CLAMP: f64 = 1e-12;

/// Anything that maps a raw input vector batch to reference outputs
/// `z`. The hardness pipeline applies its own ReLU/normalization, so
/// implementations return raw outputs.
pub trait Extractor {
    fn outputs(&self, x: &Tensor) -> Result<Tensor>;
    /// Whether ReLU precedes the L2 normalization (the default
    /// convention of the support-based classifier).
    fn relu_before_norm(&self) -> bool {
        true
    }
}

/// The standard reference extractor: a pre-trained backbone, read at
/// its logits or penultimate features. It must have been trained on
/// classes disjoint from any episode it scores.
#[derive(Debug, Clone)]
pub struct ReferenceExtractor {
    pub backbone: BackboneParams,
    pub head_input: HeadInput,
    pub relu_before_norm: bool,
}

impl ReferenceExtractor {
    pub fn new(backbone: BackboneParams) -> Self {
        Self {
            backbone,
            head_input: HeadInput::Logits,
            relu_before_norm: true,
        }
    }
}

impl Extractor for ReferenceExtractor {
    fn outputs(&self, x: &Tensor) -> Result<Tensor> {
        let (logits, penultimate) = self.backbone.forward_eval(x)?;
        Ok(match self.head_input {
            HeadInput::Logits => logits,
            HeadInput::Features => penultimate,
        })
    }

    fn relu_before_norm(&self) -> bool {
        self.relu_before_norm
    }
}

/// Hardness score of one episode, with the episode's protocol metadata
/// for downstream joins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardnessScore {
    pub omega: f64,
    pub episode_seed: u64,
    pub way: u32,
    pub support_shot: u32,
    /// Set when some class's supports all embedded to the zero vector,
    /// which makes its cluster row degenerate.
    pub degenerate: bool,
}

/// Computes the hardness of an episode under the reference extractor.
///
/// The class rows are built from the supports exactly like the
/// support-based classifier init (ReLU per the extractor's convention,
/// mean, L2 normalize); each query is embedded the same way, class
/// probabilities are the softmax of the cosine scores, and the score is
/// the mean over queries of `log((1 - p_y) / p_y)` with `p_y` clamped
/// to `[1e-12, 1 - 1e-12]`.
pub fn hardness(episode: &Episode, extractor: &dyn Extractor) -> Result<HardnessScore> {
    if episode.query.is_empty() {
        return Err(Error::Contract {
            op: "hardness",
            detail: "episode has no query samples".into(),
        });
    }
    let way = episode.way as usize;
    let relu = extractor.relu_before_norm();

    let support_z = extractor.outputs(&episode.support_matrix())?;
    let support_labels = episode.support_labels();
    let head = head_from_outputs(&support_z, &support_labels, way, relu)?;
    let degenerate = (0..way).any(|r| head.weight.value.row(r).iter().all(|&v| v == 0.0));

    let query_z = extractor.outputs(&episode.query_matrix())?;
    let mut tape = Tape::new();
    let z = tape.constant(query_z);
    let z = if relu { tape.relu(z) } else { z };
    let embedded = tape.l2_normalize(z);
    let w = tape.constant(head.weight.value.clone());
    let wt = tape.transpose(w)?;
    let scores = tape.matmul(embedded, wt)?;
    let probs = tape.softmax(scores);
    let p = tape.value(probs);

    let mut total = 0.0;
    for (r, &y) in episode.query_labels().iter().enumerate() {
        let py = p.row(r)[y as usize].clamp(HARDNESS_PROB_CLAMP, 1.0 - HARDNESS_PROB_CLAMP);
        total += ((1.0 - py) / py).ln();
    }
    Ok(HardnessScore {
        omega: total / episode.query.len() as f64,
        episode_seed: episode.seed,
        way: episode.way,
        support_shot: episode.support_shot,
        degenerate,
    })
}
