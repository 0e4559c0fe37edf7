//! SGD with Nesterov momentum and Adam, with decoupled weight decay.
//!
//! Weight decay is applied as a direct shrink `theta *= 1 - lr * wd`
//! before the gradient step, so a parameter with zero gradient shrinks
//! by exactly that factor per step and decay-exempt parameters are
//! bit-unchanged. Updates are pure functions of (params, grads, state):
//! identical inputs give bit-identical outputs.

use super::Tensor;
use crate::{Error, Result};

/// A trainable tensor plus its weight-decay exemption flag.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub decay_exempt: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Self {
            value,
            decay_exempt: false,
        }
    }

    pub fn decay_exempt(value: Tensor) -> Self {
        Self {
            value,
            decay_exempt: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdNesterov { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone)]
enum Slot {
    Sgd {
        velocity: Tensor,
    },
    Adam {
        m: Tensor,
        v: Tensor,
        step: u64,
    },
}

/// Optimizer state over a fixed list of parameters. Slot `i` always
/// corresponds to parameter `i` of the list passed to [`Optimizer::step`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, params: &[&Param]) -> Self {
        let slots = params
            .iter()
            .map(|p| {
                let zero = Tensor::zeros(p.value.shape().to_vec());
                match kind {
                    OptimizerKind::SgdNesterov { .. } => Slot::Sgd { velocity: zero },
                    OptimizerKind::Adam { .. } => Slot::Adam {
                        m: zero.clone(),
                        v: zero,
                        step: 0,
                    },
                }
            })
            .collect();
        Self {
            kind,
            lr,
            weight_decay,
            slots,
        }
    }

    pub fn sgd_nesterov(lr: f64, momentum: f64, weight_decay: f64, params: &[&Param]) -> Self {
        Self::new(OptimizerKind::SgdNesterov { momentum }, lr, weight_decay, params)
    }

    pub fn adam(lr: f64, beta1: f64, beta2: f64, eps: f64, params: &[&Param]) -> Self {
        Self::new(OptimizerKind::Adam { beta1, beta2, eps }, lr, 0.0, params)
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One update over all parameters. `grads[i] == None` means no
    /// gradient reached parameter `i` this step; it still receives
    /// weight decay unless exempt.
    pub fn step(&mut self, params: &mut [&mut Param], grads: &[Option<Tensor>]) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(Error::Contract {
                op: "optimizer_step",
                detail: format!(
                    "expected {} params/grads, got {}/{}",
                    self.slots.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params[i].value.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "optimizer_step",
                        detail: format!(
                            "grad {i} shape {:?} vs param shape {:?}",
                            g.shape(),
                            params[i].value.shape()
                        ),
                    });
                }
                if g.has_nan() {
                    return Err(Error::Divergence {
                        epoch: 0,
                        detail: format!("NaN gradient for parameter {i}"),
                    });
                }
            }
        }

        for ((param, slot), grad) in params.iter_mut().zip(&mut self.slots).zip(grads) {
            if self.weight_decay != 0.0 && !param.decay_exempt {
                let shrink = 1.0 - self.lr * self.weight_decay;
                for v in param.value.data_mut() {
                    *v *= shrink;
                }
            }
            let Some(grad) = grad else { continue };
            match (&self.kind, slot) {
                (OptimizerKind::SgdNesterov { momentum }, Slot::Sgd { velocity }) => {
                    let mu = *momentum;
                    for ((theta, vel), &g) in param
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(velocity.data_mut())
                        .zip(grad.data())
                    {
                        *vel = mu * *vel + g;
                        *theta -= self.lr * (g + mu * *vel);
                    }
                }
                (OptimizerKind::Adam { beta1, beta2, eps }, Slot::Adam { m, v, step }) => {
                    *step += 1;
                    let t = *step as i32;
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    for (((theta, m), v), &g) in param
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                        .zip(grad.data())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *theta -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                _ => unreachable!("slot kind matches optimizer kind by construction"),
            }
        }
        Ok(())
    }
}
