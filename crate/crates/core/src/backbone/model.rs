//! MLP backbone: `input -> [linear -> batchnorm -> relu] x depth ->
//! linear logits`, with batchnorm parameters flagged decay-exempt.

use crate::datakit::rng;
use crate::ndgrad::{BatchNormMode, BatchStats, NodeId, Param, Tape, Tensor};
use crate::{Error, Result};
use rand_distr::Distribution;

const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// `(fan_in, fan_out)` so a batch multiplies from the left.
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormLayer {
    fn new(width: usize) -> Self {
        Self {
            gamma: Param::decay_exempt(Tensor::vector(vec![1.0; width])),
            beta: Param::decay_exempt(Tensor::vector(vec![0.0; width])),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    fn absorb(&mut self, stats: &BatchStats) {
        for (r, &b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct HiddenBlock {
    pub linear: LinearLayer,
    pub bn: BatchNormLayer,
}

/// Pre-trained network parameters: hidden blocks plus the final linear
/// map to one logit per meta-training class. `class_ids` records which
/// global classes the logits correspond to.
#[derive(Debug, Clone)]
pub struct BackboneParams {
    input_dim: usize,
    widths: Vec<usize>,
    n_classes: usize,
    class_ids: Vec<u32>,
    pub blocks: Vec<HiddenBlock>,
    pub output: LinearLayer,
}

impl BackboneParams {
    /// Fresh parameters. Hidden weights are Kaiming-normal
    /// (`std = sqrt(2 / fan_in)`); the output layer starts at zero so
    /// the initial loss sits at the uniform-prediction baseline `ln K`.
    ///
    /// Draw order under the `"init"` stream of `seed`: hidden weights
    /// block by block, row-major.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        class_ids: Vec<u32>,
        seed: u64,
    ) -> Result<Self> {
        let n_classes = class_ids.len();
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "backbone needs at least 2 meta-training classes, got {n_classes}"
            )));
        }
        if hidden.is_empty() {
            return Err(Error::Config("backbone needs at least one hidden block".into()));
        }
        let mut rng = rng::stream(seed, "init");
        let normal = rand_distr::StandardNormal;
        let mut draw = move || -> f64 { normal.sample(&mut rng) };

        let mut blocks = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &width in hidden {
            let std = (2.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * width).map(|_| std * draw()).collect();
            blocks.push(HiddenBlock {
                linear: LinearLayer {
                    weight: Param::new(
                        Tensor::from_vec(vec![fan_in, width], w).expect("init shape"),
                    ),
                    bias: Param::new(Tensor::vector(vec![0.0; width])),
                },
                bn: BatchNormLayer::new(width),
            });
            fan_in = width;
        }
        let output = LinearLayer {
            weight: Param::new(Tensor::zeros(vec![fan_in, n_classes])),
            bias: Param::new(Tensor::vector(vec![0.0; n_classes])),
        };
        Ok(Self {
            input_dim,
            widths: hidden.to_vec(),
            n_classes,
            class_ids,
            blocks,
            output,
        })
    }

    pub(crate) fn from_parts(
        input_dim: usize,
        widths: Vec<usize>,
        class_ids: Vec<u32>,
        blocks: Vec<HiddenBlock>,
        output: LinearLayer,
    ) -> Self {
        Self {
            input_dim,
            n_classes: class_ids.len(),
            widths,
            class_ids,
            blocks,
            output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Logit count |C_m|.
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Width of the penultimate activation (features head input).
    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("at least one hidden block")
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    /// Trainable parameters in the fixed order used everywhere:
    /// per block (weight, bias, gamma, beta), then output (weight, bias).
    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            out.push(&b.linear.weight);
            out.push(&b.linear.bias);
            out.push(&b.bn.gamma);
            out.push(&b.bn.beta);
        }
        out.push(&self.output.weight);
        out.push(&self.output.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &mut self.blocks {
            out.push(&mut b.linear.weight);
            out.push(&mut b.linear.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    /// Places every trainable parameter on the tape (as gradient leaves
    /// when `trainable`) and returns the handle used to run forwards.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundBackbone {
        let bind =
            |tape: &mut Tape, p: &Param| tape.leaf(p.value.clone().with_requires_grad(trainable));
        let blocks = self
            .blocks
            .iter()
            .map(|b| BoundBlock {
                weight: bind(tape, &b.linear.weight),
                bias: bind(tape, &b.linear.bias),
                gamma: bind(tape, &b.bn.gamma),
                beta: bind(tape, &b.bn.beta),
            })
            .collect();
        BoundBackbone {
            blocks,
            output_weight: bind(tape, &self.output.weight),
            output_bias: bind(tape, &self.output.bias),
        }
    }

    /// Folds train-mode batch statistics into the running estimates,
    /// one entry per hidden block.
    pub fn absorb_batch_stats(&mut self, stats: &[BatchStats]) {
        debug_assert_eq!(stats.len(), self.blocks.len());
        for (block, s) in self.blocks.iter_mut().zip(stats) {
            block.bn.absorb(s);
        }
    }

    /// Plain evaluation forward (running batchnorm statistics, no
    /// gradients): returns `(logits, penultimate)` values.
    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(x.clone());
        let (out, _) = bound.forward(&mut tape, self, x, BatchNormMode::Eval)?;
        Ok((
            tape.value(out.logits).clone(),
            tape.value(out.penultimate).clone(),
        ))
    }
}

struct BoundBlock {
    weight: NodeId,
    bias: NodeId,
    gamma: NodeId,
    beta: NodeId,
}

/// Tape handles for one bound copy of the backbone parameters.
pub struct BoundBackbone {
    blocks: Vec<BoundBlock>,
    output_weight: NodeId,
    output_bias: NodeId,
}

/// Forward outputs: final logits and the penultimate activation.
pub struct ForwardNodes {
    pub logits: NodeId,
    pub penultimate: NodeId,
}

impl BoundBackbone {
    /// Leaf ids aligned with [`BackboneParams::params`].
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            out.push(b.weight);
            out.push(b.bias);
            out.push(b.gamma);
            out.push(b.beta);
        }
        out.push(self.output_weight);
        out.push(self.output_bias);
        out
    }

    /// Runs the network on a `(batch, input_dim)` node. Train mode
    /// normalizes with current batch statistics and returns them (one
    /// per block) for the caller to absorb; eval mode uses the running
    /// statistics stored in `params`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BackboneParams,
        x: NodeId,
        mode: BatchNormMode,
    ) -> Result<(ForwardNodes, Vec<BatchStats>)> {
        if tape.value(x).row_len() != params.input_dim {
            return Err(Error::ShapeMismatch {
                op: "backbone_forward",
                detail: format!(
                    "input dim {} vs model input dim {}",
                    tape.value(x).row_len(),
                    params.input_dim
                ),
            });
        }
        let mut stats = Vec::with_capacity(self.blocks.len());
        let mut h = x;
        for (bound, block) in self.blocks.iter().zip(&params.blocks) {
            let lin = tape.matmul(h, bound.weight)?;
            let lin_shape = tape.value(lin).shape().to_vec();
            let bias = tape.broadcast(bound.bias, &lin_shape)?;
            let pre = tape.add(lin, bias)?;
            let (bn, batch) = tape.batchnorm(
                pre,
                bound.gamma,
                bound.beta,
                &block.bn.running_mean,
                &block.bn.running_var,
                mode,
            )?;
            if let Some(batch) = batch {
                stats.push(batch);
            }
            h = tape.relu(bn);
        }
        let penultimate = h;
        let lin = tape.matmul(h, self.output_weight)?;
        let lin_shape = tape.value(lin).shape().to_vec();
        let bias = tape.broadcast(self.output_bias, &lin_shape)?;
        let logits = tape.add(lin, bias)?;
        Ok((
            ForwardNodes {
                logits,
                penultimate,
            },
            stats,
        ))
    }
}
