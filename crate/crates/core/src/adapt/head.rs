//! Episode classifier head: support-based initialization and the
//! cosine-style forward pass over normalized backbone embeddings.

use crate::backbone::BackboneParams;
use crate::ndgrad::{NodeId, Param, Tape, Tensor, EPS_NORM};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which backbone output feeds the episode classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    /// Meta-training logits (the default; they cluster by class).
    Logits,
    /// Penultimate-layer activations.
    Features,
}

/// Classifier parameters for one episode: one weight row per episode
/// class and a bias. After [`support_init`] every row has unit L2 norm
/// (or is zero in the all-negative degenerate case) and the bias is 0.
#[derive(Debug, Clone)]
pub struct HeadParams {
    /// `(way, head_in)`.
    pub weight: Param,
    /// `(way,)`.
    pub bias: Param,
}

impl HeadParams {
    pub fn way(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundHead {
        BoundHead {
            weight: tape.leaf(self.weight.value.clone().with_requires_grad(trainable)),
            bias: tape.leaf(self.bias.value.clone().with_requires_grad(trainable)),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct BoundHead {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// Embedding pipeline on the tape: pick the head input, apply ReLU
/// unless disabled, then L2-normalize per row.
pub fn embed_nodes(
    tape: &mut Tape,
    logits: NodeId,
    penultimate: NodeId,
    head_input: HeadInput,
    relu_before_norm: bool,
) -> NodeId {
    let z = match head_input {
        HeadInput::Logits => logits,
        HeadInput::Features => penultimate,
    };
    let z = if relu_before_norm { tape.relu(z) } else { z };
    tape.l2_normalize(z)
}

/// Head logits on the tape: `(1/T) * (e w^T + b)` for embeddings
/// `e: (n, d)`.
pub fn head_logits_nodes(
    tape: &mut Tape,
    head: &BoundHead,
    embeddings: NodeId,
    temperature: f64,
) -> Result<NodeId> {
    let wt = tape.transpose(head.weight)?;
    let lin = tape.matmul(embeddings, wt)?;
    let lin_shape = tape.value(lin).shape().to_vec();
    let bias = tape.broadcast(head.bias, &lin_shape)?;
    let logits = tape.add(lin, bias)?;
    Ok(tape.scale(logits, 1.0 / temperature))
}

/// Plain embedding of a batch with the backbone in eval mode.
pub fn embed_eval(
    backbone: &BackboneParams,
    x: &Tensor,
    head_input: HeadInput,
    relu_before_norm: bool,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = backbone.bind(&mut tape, false);
    let x_node = tape.constant(x.clone());
    let (fwd, _) = bound.forward(
        &mut tape,
        backbone,
        x_node,
        crate::ndgrad::BatchNormMode::Eval,
    )?;
    let e = embed_nodes(
        &mut tape,
        fwd.logits,
        fwd.penultimate,
        head_input,
        relu_before_norm,
    );
    Ok(tape.value(e).clone())
}

/// Support-based head initialization: each class row is the
/// L2-normalized mean of its supports' (ReLU'd) backbone outputs,
/// averaged before normalization; the bias is zero.
///
/// Supports are embedded with the backbone in eval mode. Labels must be
/// the episode-internal `0..way-1`.
pub fn support_init(
    backbone: &BackboneParams,
    support: &[(Vec<f64>, u32)],
    way: usize,
    head_input: HeadInput,
    relu_before_norm: bool,
) -> Result<HeadParams> {
    if support.is_empty() {
        return Err(Error::Contract {
            op: "support_init",
            detail: "empty support set".into(),
        });
    }
    let rows: Vec<Vec<f64>> = support.iter().map(|(v, _)| v.clone()).collect();
    let x = Tensor::from_rows(&rows)?;
    let (logits, penultimate) = backbone.forward_eval(&x)?;
    let z = match head_input {
        HeadInput::Logits => logits,
        HeadInput::Features => penultimate,
    };
    let labels: Vec<u32> = support.iter().map(|(_, y)| *y).collect();
    head_from_outputs(&z, &labels, way, relu_before_norm)
}

/// Aggregation step of [`support_init`], exposed over raw backbone
/// outputs `z: (n, d)`: per class, ReLU (optional), Euclidean mean,
/// then L2 normalization; bias zero.
pub fn head_from_outputs(
    z: &Tensor,
    labels: &[u32],
    way: usize,
    relu_before_norm: bool,
) -> Result<HeadParams> {
    let d = z.row_len();
    let mut sums = vec![vec![0.0f64; d]; way];
    let mut counts = vec![0usize; way];
    for (r, &y) in labels.iter().enumerate() {
        let y = y as usize;
        if y >= way {
            return Err(Error::Contract {
                op: "support_init",
                detail: format!("label {y} outside 0..{way}"),
            });
        }
        for (acc, &v) in sums[y].iter_mut().zip(z.row(r)) {
            *acc += if relu_before_norm { v.max(0.0) } else { v };
        }
        counts[y] += 1;
    }
    if let Some(y) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Contract {
            op: "support_init",
            detail: format!("class {y} has no support samples"),
        });
    }

    let mut w = Vec::with_capacity(way * d);
    for (row_sum, &count) in sums.iter().zip(&counts) {
        let mean: Vec<f64> = row_sum.iter().map(|v| v / count as f64).collect();
        let inv = 1.0 / (mean.iter().map(|v| v * v).sum::<f64>() + EPS_NORM).sqrt();
        w.extend(mean.iter().map(|v| v * inv));
    }
    Ok(HeadParams {
        weight: Param::new(Tensor::from_vec(vec![way, d], w)?),
        bias: Param::new(Tensor::vector(vec![0.0; way])),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_orthogonal_supports_average_then_normalize() {
        // Hand-built embeddings via an identity-ish check on the math:
        // mean([1,0], [0,1]) = [0.5, 0.5] -> normalized [0.70711, 0.70711].
        let mean = [0.5f64, 0.5];
        let inv = 1.0 / (mean.iter().map(|v| v * v).sum::<f64>() + EPS_NORM).sqrt();
        for v in mean {
            assert_abs_diff_eq!(v * inv, 0.7071067811865475, epsilon = 1e-9);
        }
    }

    #[test]
    fn embed_rows_are_unit_or_zero() {
        let bb = BackboneParams::new(4, &[8], (0..5).collect(), 31).unwrap();
        let x = Tensor::from_rows(&[
            vec![0.5, -0.25, 1.0, 0.0],
            vec![-2.0, 0.75, 0.1, 0.4],
            vec![0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let e = embed_eval(&bb, &x, HeadInput::Logits, true).unwrap();
        for r in 0..e.rows() {
            let norm: f64 = e.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                norm < 1e-9 || (norm - 1.0).abs() < 1e-9,
                "row norm {norm} neither 0 nor 1"
            );
        }
    }
}
