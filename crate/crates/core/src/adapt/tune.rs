//! Non-transductive and transductive fine-tuning of an adapted model.
//!
//! Both run full-batch Adam for a fixed number of epochs with no weight
//! decay, mixup, smoothing, or dropout. The transductive variant makes
//! two updates per epoch: one on the support cross-entropy, one on the
//! Shannon entropy of the query predictions (query labels are never
//! seen here; the query parameter carries inputs only).

use super::head::{embed_nodes, head_logits_nodes, HeadInput, HeadParams};
use crate::backbone::{BackboneParams, BoundBackbone};
use crate::ndgrad::{BatchNormMode, NodeId, Optimizer, Tape, Tensor};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fine-tuning hyper-parameters. The defaults are the fixed protocol
/// used across every benchmark run: 25 epochs of Adam at 5e-5 with unit
/// entropy coefficient and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub lr: f64,
    pub entropy_coefficient: f64,
    pub temperature: f64,
    /// Scale the entropy term by `1 / ln(way)` (the high-way variant).
    pub entropy_scale_by_log_way: bool,
    pub freeze_backbone: bool,
    pub head_input: HeadInput,
    /// Apply ReLU before L2 normalization in the embedding (disabling
    /// it is the companion of the high-way variant).
    pub relu_before_norm: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            lr: 5e-5,
            entropy_coefficient: 1.0,
            temperature: 1.0,
            entropy_scale_by_log_way: false,
            freeze_backbone: false,
            head_input: HeadInput::Logits,
            relu_before_norm: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("adapt lr must be > 0".into()));
        }
        if self.entropy_coefficient < 0.0 {
            return Err(Error::Config("entropy_coefficient must be >= 0".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be > 0".into()));
        }
        Ok(())
    }
}

/// Backbone plus episode head; the unit of per-episode adaptation.
/// Owning the backbone copy keeps episodes independent.
#[derive(Debug, Clone)]
pub struct AdaptedModel {
    pub backbone: BackboneParams,
    pub head: HeadParams,
    pub head_input: HeadInput,
    pub relu_before_norm: bool,
}

impl AdaptedModel {
    /// Class probabilities for a batch, eval mode (running batchnorm
    /// statistics), with temperature applied.
    pub fn predict(&self, x: &Tensor, temperature: f64) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.backbone.bind(&mut tape, false);
        let head = self.head.bind(&mut tape, false);
        let x_node = tape.constant(x.clone());
        let (fwd, _) = bound.forward(&mut tape, &self.backbone, x_node, BatchNormMode::Eval)?;
        let e = embed_nodes(
            &mut tape,
            fwd.logits,
            fwd.penultimate,
            self.head_input,
            self.relu_before_norm,
        );
        let logits = head_logits_nodes(&mut tape, &head, e, temperature)?;
        let p = tape.softmax(logits);
        Ok(tape.value(p).clone())
    }
}

/// Per-epoch loss traces, `epochs + 1` entries each.
///
/// `support_ce` holds the optimization objective (support cross-entropy
/// under the update forward's batchnorm mode): entry `i` is the value
/// the support step of epoch `i` descended from, and the last entry is
/// a fresh readout after the final epoch. `query_entropy` holds the
/// eval-mode mean Shannon entropy of the query predictions before any
/// update and after each epoch; it is empty when no query set is
/// attached.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AdaptTraces {
    pub support_ce: Vec<f64>,
    pub query_entropy: Vec<f64>,
}

struct Session<'a> {
    model: &'a mut AdaptedModel,
    config: &'a AdaptConfig,
    support_x: Tensor,
    support_targets: Tensor,
    query_x: Option<Tensor>,
    optimizer: Optimizer,
}

impl<'a> Session<'a> {
    fn new(
        model: &'a mut AdaptedModel,
        support: &[(Vec<f64>, u32)],
        query_inputs: Option<&Tensor>,
        config: &'a AdaptConfig,
    ) -> Result<Self> {
        config.validate()?;
        let way = model.head.way();
        let rows: Vec<Vec<f64>> = support.iter().map(|(v, _)| v.clone()).collect();
        let support_x = Tensor::from_rows(&rows)?;
        let onehot: Vec<Vec<f64>> = support
            .iter()
            .map(|(_, y)| {
                let mut row = vec![0.0; way];
                row[*y as usize] = 1.0;
                row
            })
            .collect();
        let support_targets = Tensor::from_rows(&onehot)?;

        let params = Self::param_refs(model, config);
        let optimizer = Optimizer::adam(
            config.lr,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
            &params,
        );
        Ok(Self {
            model,
            config,
            support_x,
            support_targets,
            query_x: query_inputs.cloned(),
            optimizer,
        })
    }

    fn param_refs<'m>(model: &'m AdaptedModel, config: &AdaptConfig) -> Vec<&'m crate::ndgrad::Param> {
        let mut params = Vec::new();
        if !config.freeze_backbone {
            params.extend(model.backbone.params());
        }
        params.extend(model.head.params());
        params
    }

    /// Entropy scaling: coefficient, optionally divided by ln(way).
    fn entropy_weight(&self) -> f64 {
        let mut w = self.config.entropy_coefficient;
        if self.config.entropy_scale_by_log_way {
            w /= (self.model.head.way() as f64).ln().max(f64::MIN_POSITIVE);
        }
        w
    }

    /// One optimization step on a scalar loss built by `build_loss` from
    /// (tape, head-logit node of `x`). The update forward normalizes
    /// batchnorm with the current batch's statistics (unless the
    /// backbone is frozen, which keeps it a fixed eval-mode extractor);
    /// the running estimates from pre-training are left untouched so
    /// prediction stays anchored to the embeddings the head was
    /// initialized on.
    /// Builds the update forward: embeddings and head logits of `x`
    /// under the adaptation batchnorm mode. Returns the logits node and
    /// the gradient leaf ids (backbone leaves only when trainable).
    fn forward(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        trainable: bool,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let trainable_backbone = trainable && !self.config.freeze_backbone;
        let bn_mode = if self.config.freeze_backbone {
            BatchNormMode::Eval
        } else {
            BatchNormMode::Train
        };
        let bound: BoundBackbone = self.model.backbone.bind(tape, trainable_backbone);
        let head = self.model.head.bind(tape, trainable);
        let x_node = tape.constant(x.clone());
        let (fwd, _) = bound.forward(tape, &self.model.backbone, x_node, bn_mode)?;
        let e = embed_nodes(
            tape,
            fwd.logits,
            fwd.penultimate,
            self.model.head_input,
            self.model.relu_before_norm,
        );
        let logits = head_logits_nodes(tape, &head, e, self.config.temperature)?;
        let mut leaf_ids = Vec::new();
        if trainable_backbone {
            leaf_ids.extend(bound.leaf_ids());
        }
        leaf_ids.push(head.weight);
        leaf_ids.push(head.bias);
        Ok((logits, leaf_ids))
    }

    /// One optimization step on a scalar loss built from the head
    /// logits of `x`; returns the pre-update loss value.
    fn step(
        &mut self,
        x: &Tensor,
        epoch: usize,
        build_loss: impl FnOnce(&mut Tape, NodeId) -> Result<NodeId>,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let (logits, leaf_ids) = self.forward(&mut tape, x, true)?;
        let loss = build_loss(&mut tape, logits)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("adaptation loss {loss_value}"),
            });
        }

        let mut grads = tape.backward(loss)?;
        let grad_list: Vec<Option<Tensor>> = leaf_ids.iter().map(|&id| grads.take(id)).collect();

        let mut params: Vec<&mut crate::ndgrad::Param> = Vec::new();
        if !self.config.freeze_backbone {
            params.extend(self.model.backbone.params_mut());
        }
        params.extend(self.model.head.params_mut());
        self.optimizer.step(&mut params, &grad_list).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { epoch, detail },
            other => other,
        })?;
        Ok(loss_value)
    }

    fn support_step(&mut self, epoch: usize) -> Result<f64> {
        let x = self.support_x.clone();
        let targets = self.support_targets.clone();
        self.step(&x, epoch, |tape, logits| {
            crate::backbone::cross_entropy_smoothed(tape, logits, &targets)
        })
    }

    fn entropy_step(&mut self, epoch: usize) -> Result<f64> {
        let weight = self.entropy_weight();
        let x = self
            .query_x
            .clone()
            .expect("entropy step requires query inputs");
        let n = x.rows() as f64;
        self.step(&x, epoch, |tape, logits| {
            // mean_i H(p_i) = -(1/n) sum(p * log p), probabilities
            // clamped inside log.
            let p = tape.softmax(logits);
            let lp = tape.log(p);
            let plp = tape.mul(p, lp)?;
            let total = tape.sum(plp);
            let h_mean = tape.scale(total, -1.0 / n);
            Ok(tape.scale(h_mean, weight))
        })
    }

    /// Current value of the support objective, no update.
    fn support_objective(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let (logits, _) = self.forward(&mut tape, &self.support_x.clone(), false)?;
        let loss =
            crate::backbone::cross_entropy_smoothed(&mut tape, logits, &self.support_targets)?;
        Ok(tape.value(loss).item())
    }

    /// Eval-mode mean entropy of the current query predictions.
    fn record_query_entropy(&self, traces: &mut AdaptTraces) -> Result<()> {
        if let Some(q) = &self.query_x {
            let p = self.model.predict(q, self.config.temperature)?;
            let mut h = 0.0;
            for r in 0..p.rows() {
                h += p
                    .row(r)
                    .iter()
                    .map(|&v| {
                        let v = v.clamp(crate::ndgrad::EPS_LOG, 1.0);
                        -v * v.ln()
                    })
                    .sum::<f64>();
            }
            traces.query_entropy.push(h / p.rows() as f64);
        }
        Ok(())
    }
}

/// Fine-tunes on the labeled support set only: `epochs` full-batch Adam
/// updates of the support cross-entropy. `epochs = 0` leaves the model
/// at its support-based initialization.
pub fn finetune(
    model: &mut AdaptedModel,
    support: &[(Vec<f64>, u32)],
    config: &AdaptConfig,
) -> Result<AdaptTraces> {
    let mut session = Session::new(model, support, None, config)?;
    let mut traces = AdaptTraces::default();
    for epoch in 0..config.epochs {
        let loss = session.support_step(epoch)?;
        traces.support_ce.push(loss);
    }
    traces.support_ce.push(session.support_objective()?);
    Ok(traces)
}

/// Transductive fine-tuning: per epoch, one update on the support
/// cross-entropy followed by one update on the (scaled) mean Shannon
/// entropy of the query predictions. Query labels are not an input.
///
/// A zero entropy coefficient skips the entropy update entirely, making
/// the trajectory identical to [`finetune`].
pub fn transductive_finetune(
    model: &mut AdaptedModel,
    support: &[(Vec<f64>, u32)],
    query_inputs: &Tensor,
    config: &AdaptConfig,
) -> Result<AdaptTraces> {
    if query_inputs.rows() == 0 || query_inputs.numel() == 0 {
        return Err(Error::Contract {
            op: "transductive_finetune",
            detail: "empty query set; use finetune for support-only adaptation".into(),
        });
    }
    let mut session = Session::new(model, support, Some(query_inputs), config)?;
    let mut traces = AdaptTraces::default();
    session.record_query_entropy(&mut traces)?;
    let entropy_active = config.entropy_coefficient != 0.0;
    for epoch in 0..config.epochs {
        let loss = session.support_step(epoch)?;
        traces.support_ce.push(loss);
        if entropy_active {
            session.entropy_step(epoch)?;
        }
        session.record_query_entropy(&mut traces)?;
    }
    traces.support_ce.push(session.support_objective()?);
    Ok(traces)
}
