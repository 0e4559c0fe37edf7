//! Cross-entropy pre-training with label smoothing, mixup, additive
//! noise augmentation, weight decay (batchnorm exempt), and cosine
//! learning-rate cycles under SGD with Nesterov momentum.

use super::model::BackboneParams;
use crate::datakit::{augment, rng, Dataset};
use crate::ndgrad::{BatchNormMode, LrSchedule, NodeId, Optimizer, Tape, Tensor};
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    /// Hidden block widths.
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    /// Label smoothing epsilon.
    pub label_smoothing: f64,
    pub mixup_alpha: f64,
    pub mixup_enabled: bool,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epoch lengths of the cosine cycles; cycle i starts at lr 10^-i.
    pub cycles: Vec<usize>,
    /// Additive-noise augmentation scale on the input vectors.
    pub augment_sigma: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            batch_size: 32,
            label_smoothing: 0.1,
            mixup_alpha: 0.25,
            mixup_enabled: true,
            momentum: 0.9,
            weight_decay: 1e-4,
            cycles: vec![8, 16],
            augment_sigma: 0.1,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label_smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        if self.mixup_enabled {
            if !(self.mixup_alpha > 0.0) {
                return Err(Error::Config("mixup_alpha must be > 0".into()));
            }
            if self.batch_size < 2 {
                return Err(Error::Config("mixup needs batch_size >= 2".into()));
            }
        }
        if self.batch_size == 0 || self.cycles.is_empty() || self.hidden.is_empty() {
            return Err(Error::Config(
                "batch_size, cycles, and hidden widths must be non-empty/positive".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::decade_cycles(&self.cycles)
    }
}

/// Smoothed target distribution: `1 - eps` on the true class, the rest
/// spread evenly over the other `k - 1` classes.
pub fn smooth_labels(label: u32, k: usize, eps: f64) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Domain {
            op: "smooth_labels",
            detail: format!("need k >= 2 classes, got {k}"),
        });
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Domain {
            op: "smooth_labels",
            detail: format!("epsilon {eps} outside [0, 1)"),
        });
    }
    if label as usize >= k {
        return Err(Error::Domain {
            op: "smooth_labels",
            detail: format!("label {label} outside 0..{k}"),
        });
    }
    let off = eps / (k - 1) as f64;
    let mut t = vec![off; k];
    t[label as usize] = 1.0 - eps;
    Ok(t)
}

/// Convex combination of two batches with `lambda ~ Beta(alpha, alpha)`:
/// `x = l*x1 + (1-l)*x2`, same for the (already smoothed) targets.
/// Returns the mixed batch and the sampled lambda.
pub fn mixup(
    batch1: (&Tensor, &Tensor),
    batch2: (&Tensor, &Tensor),
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Tensor, f64)> {
    let beta = rand_distr::Beta::new(alpha, alpha).map_err(|e| Error::Domain {
        op: "mixup",
        detail: e.to_string(),
    })?;
    let lambda: f64 = beta.sample(rng);
    let (x, y) = mix_with_lambda(batch1, batch2, lambda)?;
    Ok((x, y, lambda))
}

/// Interpolation at a fixed lambda, shared by [`mixup`] and tests.
pub fn mix_with_lambda(
    batch1: (&Tensor, &Tensor),
    batch2: (&Tensor, &Tensor),
    lambda: f64,
) -> Result<(Tensor, Tensor)> {
    let x = batch1
        .0
        .zip_map(batch2.0, |a, b| lambda * a + (1.0 - lambda) * b)?;
    let y = batch1
        .1
        .zip_map(batch2.1, |a, b| lambda * a + (1.0 - lambda) * b)?;
    Ok((x, y))
}

/// Smoothed cross-entropy on the tape:
/// `-(1/n) sum_i sum_k t_ik * log_softmax(z)_ik`.
pub fn cross_entropy_smoothed(
    tape: &mut Tape,
    logits: NodeId,
    targets: &Tensor,
) -> Result<NodeId> {
    if tape.value(logits).shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy_smoothed",
            detail: format!(
                "logits {:?} vs targets {:?}",
                tape.value(logits).shape(),
                targets.shape()
            ),
        });
    }
    let n = tape.value(logits).rows() as f64;
    let t = tape.constant(targets.clone());
    let lsm = tape.log_softmax(logits);
    let prod = tape.mul(t, lsm)?;
    let total = tape.sum(prod);
    Ok(tape.scale(total, -1.0 / n))
}

/// Pre-training outcome.
///
/// `train_loss_trace` is the per-epoch mean of the optimization loss
/// (augmented, mixed batches); `eval_loss_trace` is the smoothed
/// cross-entropy on the clean pool in eval mode after each epoch, which
/// is the quantity that anneals monotonically across a cosine cycle.
pub struct PretrainOutcome {
    pub backbone: BackboneParams,
    /// Clean-pool smoothed loss before any update; `ln K` at the
    /// zero-output initialization.
    pub initial_loss: f64,
    pub train_loss_trace: Vec<f64>,
    pub eval_loss_trace: Vec<f64>,
    pub final_train_accuracy: f64,
}

/// Pre-trains a backbone on the `pool` classes of `dataset`.
///
/// Per epoch the sample order is reshuffled; per batch the inputs are
/// augmented, labels smoothed, and (optionally) the batch is mixed with
/// a shuffled copy of itself, in that order. One SGD-Nesterov update per
/// batch at the cosine-cycle learning rate.
pub fn pretrain(dataset: &Dataset, pool: &[u32], config: &PretrainConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    let mut class_ids: Vec<u32> = pool.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    if class_ids.len() < 2 {
        return Err(Error::Config(format!(
            "pre-training needs at least 2 classes, got {}",
            class_ids.len()
        )));
    }
    let k = class_ids.len();

    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for (local, &class_id) in class_ids.iter().enumerate() {
        for sample in dataset.samples_of(class_id)? {
            inputs.push(sample.clone());
            labels.push(local as u32);
        }
    }

    let mut backbone = BackboneParams::new(
        dataset.dim(),
        &config.hidden,
        class_ids,
        rng::derive_seed(config.seed, "pretrain/init"),
    )?;
    let schedule = config.schedule();
    let mut optimizer = Optimizer::sgd_nesterov(
        schedule.lr_at(0, 0.0)?,
        config.momentum,
        config.weight_decay,
        &backbone.params(),
    );
    let mut loop_rng = rng::stream(config.seed, "pretrain/loop");

    let n = inputs.len();
    let n_batches = n.div_ceil(config.batch_size);
    let mut train_loss_trace = Vec::with_capacity(schedule.total_epochs());
    let mut eval_loss_trace = Vec::with_capacity(schedule.total_epochs());
    let initial_loss =
        pool_smoothed_loss(&backbone, &inputs, &labels, k, config.label_smoothing)?;

    for epoch in 0..schedule.total_epochs() {
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut order, &mut loop_rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let x_rows: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let x = Tensor::from_rows(&x_rows)?;
            let x = augment(&x, config.augment_sigma, &mut loop_rng);
            let target_rows: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| smooth_labels(labels[i], k, config.label_smoothing))
                .collect::<Result<_>>()?;
            let targets = Tensor::from_rows(&target_rows)?;

            let (x, targets) = if config.mixup_enabled {
                let mut perm: Vec<usize> = (0..chunk.len()).collect();
                rng::shuffle(&mut perm, &mut loop_rng);
                let x2_rows: Vec<Vec<f64>> = perm.iter().map(|&i| x.row(i).to_vec()).collect();
                let y2_rows: Vec<Vec<f64>> =
                    perm.iter().map(|&i| targets.row(i).to_vec()).collect();
                let x2 = Tensor::from_rows(&x2_rows)?;
                let y2 = Tensor::from_rows(&y2_rows)?;
                let (xm, ym, _) = mixup((&x, &targets), (&x2, &y2), config.mixup_alpha, &mut loop_rng)?;
                (xm, ym)
            } else {
                (x, targets)
            };

            let mut tape = Tape::new();
            let bound = backbone.bind(&mut tape, true);
            let leaf_ids = bound.leaf_ids();
            let x_node = tape.leaf(x);
            let (fwd, stats) = bound.forward(&mut tape, &backbone, x_node, BatchNormMode::Train)?;
            let loss = cross_entropy_smoothed(&mut tape, fwd.logits, &targets)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("loss {loss_value} at batch {batch_idx}"),
                });
            }
            epoch_loss += loss_value * chunk.len() as f64;

            backbone.absorb_batch_stats(&stats);
            let mut grads = tape.backward(loss)?;
            let grad_list: Vec<Option<Tensor>> =
                leaf_ids.iter().map(|&id| grads.take(id)).collect();
            optimizer.set_lr(schedule.lr_at(epoch, batch_idx as f64 / n_batches as f64)?);
            optimizer
                .step(&mut backbone.params_mut(), &grad_list)
                .map_err(|e| match e {
                    Error::Divergence { detail, .. } => Error::Divergence { epoch, detail },
                    other => other,
                })?;
        }
        train_loss_trace.push(epoch_loss / n as f64);
        eval_loss_trace.push(pool_smoothed_loss(
            &backbone,
            &inputs,
            &labels,
            k,
            config.label_smoothing,
        )?);
    }

    let final_train_accuracy = pool_accuracy(&backbone, &inputs, &labels)?;
    Ok(PretrainOutcome {
        backbone,
        initial_loss,
        train_loss_trace,
        eval_loss_trace,
        final_train_accuracy,
    })
}

/// Smoothed cross-entropy of the clean pool in eval mode.
fn pool_smoothed_loss(
    backbone: &BackboneParams,
    inputs: &[Vec<f64>],
    labels: &[u32],
    k: usize,
    eps: f64,
) -> Result<f64> {
    let x = Tensor::from_rows(&inputs.to_vec())?;
    let targets = Tensor::from_rows(
        &labels
            .iter()
            .map(|&y| smooth_labels(y, k, eps))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let mut tape = Tape::new();
    let bound = backbone.bind(&mut tape, false);
    let x_node = tape.constant(x);
    let (fwd, _) = bound.forward(&mut tape, backbone, x_node, BatchNormMode::Eval)?;
    let loss = cross_entropy_smoothed(&mut tape, fwd.logits, &targets)?;
    Ok(tape.value(loss).item())
}

fn pool_accuracy(backbone: &BackboneParams, inputs: &[Vec<f64>], labels: &[u32]) -> Result<f64> {
    let x = Tensor::from_rows(&inputs.to_vec())?;
    let (logits, _) = backbone.forward_eval(&x)?;
    let mut correct = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == y as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}
