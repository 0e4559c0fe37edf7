//! Recorded computation graph with reverse-mode backward.
//!
//! Nodes are appended in evaluation order, so the tape index order *is*
//! a topological order; `backward` walks it in reverse and accumulates
//! gradients additively at fan-out. The tape is consumed by `backward`,
//! which frees the graph by construction.

use super::tensor::as_matrix_dims;
use super::{Tensor, EPS_BATCHNORM, EPS_LOG, EPS_NORM};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Whether batchnorm normalizes with current-batch statistics or the
/// running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Batch moments computed by a train-mode batchnorm node, exposed so the
/// owning layer can fold them into its running statistics.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

struct BatchNormCtx {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: BatchNormMode,
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Broadcast(NodeId),
    L2Normalize(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        ctx: BatchNormCtx,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients returned by [`Tape::backward`], indexed by the `NodeId`s of
/// the consumed tape. Only `requires_grad` leaves (and interior nodes on
/// a path to one) carry a gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

/// Eagerly-evaluated computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Places a tensor on the tape. Gradient tracking follows the
    /// tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        let needs_grad = t.requires_grad();
        self.push(t, Op::Leaf, needs_grad)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Matmul(a, b), ng))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        as_matrix_dims(self.value(a), "transpose")?;
        let v = self.value(a).transposed();
        let ng = self.needs(a);
        Ok(self.push(v, Op::Transpose(a), ng))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    /// Natural log with the argument clamped to `>= EPS_LOG`.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(EPS_LOG).ln());
        let ng = self.needs(a);
        self.push(v, Op::Log(a), ng)
    }

    /// Full reduction to a rank-0 scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        let ng = self.needs(a);
        self.push(v, Op::Sum(a), ng)
    }

    /// Full mean to a rank-0 scalar.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64);
        let ng = self.needs(a);
        self.push(v, Op::Mean(a), ng)
    }

    /// Broadcasts a scalar to any shape, or a `[d]` vector row-wise to
    /// `[n, d]`.
    pub fn broadcast(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let src = self.value(a);
        let numel: usize = shape.iter().product();
        let data = if src.is_scalar() {
            vec![src.item(); numel]
        } else {
            match (src.shape(), shape) {
                ([d], [n, d2]) if d == d2 => {
                    let mut out = Vec::with_capacity(n * d);
                    for _ in 0..*n {
                        out.extend_from_slice(src.data());
                    }
                    out
                }
                (from, to) => {
                    return Err(Error::ShapeMismatch {
                        op: "broadcast",
                        detail: format!("cannot broadcast {from:?} to {to:?}"),
                    })
                }
            }
        };
        let v = Tensor::new_unchecked(shape.to_vec(), data);
        let ng = self.needs(a);
        Ok(self.push(v, Op::Broadcast(a), ng))
    }

    /// Row-wise L2 normalization: `x / sqrt(|x|^2 + EPS_NORM)` per row,
    /// so the zero row maps to the zero row.
    pub fn l2_normalize(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let w = src.row_len();
        let mut data = Vec::with_capacity(src.numel());
        for r in 0..src.rows() {
            let row = src.row(r);
            let inv = 1.0 / (row.iter().map(|v| v * v).sum::<f64>() + EPS_NORM).sqrt();
            data.extend(row.iter().map(|v| v * inv));
        }
        debug_assert_eq!(data.len(), src.rows() * w);
        let v = Tensor::new_unchecked(src.shape().to_vec(), data);
        let ng = self.needs(a);
        self.push(v, Op::L2Normalize(a), ng)
    }

    /// Row-wise softmax with max-subtraction.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let mut data = Vec::with_capacity(src.numel());
        for r in 0..src.rows() {
            softmax_row(src.row(r), &mut data);
        }
        let v = Tensor::new_unchecked(src.shape().to_vec(), data);
        let ng = self.needs(a);
        self.push(v, Op::Softmax(a), ng)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let mut data = Vec::with_capacity(src.numel());
        for r in 0..src.rows() {
            let row = src.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
            data.extend(row.iter().map(|v| v - lse));
        }
        let v = Tensor::new_unchecked(src.shape().to_vec(), data);
        let ng = self.needs(a);
        self.push(v, Op::LogSoftmax(a), ng)
    }

    /// Per-feature batch normalization over the rows of `x: (n, d)`,
    /// with learnable `gamma`, `beta` of shape `(d,)`.
    ///
    /// Train mode normalizes with the (biased) batch moments and returns
    /// them so the caller can update its running statistics; eval mode
    /// uses the supplied running statistics. The op itself is pure.
    pub fn batchnorm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        mode: BatchNormMode,
    ) -> Result<(NodeId, Option<BatchStats>)> {
        let xs = self.value(x);
        let (n, d) = as_matrix_dims(xs, "batchnorm")?;
        if self.value(gamma).numel() != d || self.value(beta).numel() != d {
            return Err(Error::ShapeMismatch {
                op: "batchnorm",
                detail: format!(
                    "gamma/beta length {}/{} vs feature dim {d}",
                    self.value(gamma).numel(),
                    self.value(beta).numel()
                ),
            });
        }
        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![0.0; d];
                let mut var = vec![0.0; d];
                for r in 0..n {
                    for (k, &v) in xs.row(r).iter().enumerate() {
                        mean[k] += v;
                    }
                }
                for m in &mut mean {
                    *m /= n as f64;
                }
                for r in 0..n {
                    for (k, &v) in xs.row(r).iter().enumerate() {
                        let c = v - mean[k];
                        var[k] += c * c;
                    }
                }
                for v in &mut var {
                    *v /= n as f64;
                }
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: var.clone(),
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval => {
                if running_mean.len() != d || running_var.len() != d {
                    return Err(Error::ShapeMismatch {
                        op: "batchnorm",
                        detail: "running statistics length mismatch".into(),
                    });
                }
                (running_mean.to_vec(), running_var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + EPS_BATCHNORM).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(n * d);
        for r in 0..n {
            for (k, &v) in xs.row(r).iter().enumerate() {
                x_hat.push((v - mean[k]) * inv_std[k]);
            }
        }
        let x_hat = Tensor::new_unchecked(vec![n, d], x_hat);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for k in 0..d {
                out.push(g[k] * x_hat.row(r)[k] + b[k]);
            }
        }
        let v = Tensor::new_unchecked(vec![n, d], out);
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let id = self.push(
            v,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                ctx: BatchNormCtx {
                    x_hat,
                    inv_std,
                    mode,
                },
            },
            ng,
        );
        Ok((id, stats))
    }

    /// Reverse pass from a scalar loss. Consumes the tape; gradients
    /// accumulate additively where a node fans out.
    pub fn backward(self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract {
                op: "backward",
                detail: format!(
                    "loss must be a scalar, got shape {:?}",
                    self.value(loss).shape()
                ),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &self.nodes, *a, g.clone());
                    accumulate(&mut grads, &self.nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, &self.nodes, *a, g.clone());
                    accumulate(&mut grads, &self.nodes, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(&self.nodes[b.0].value, |gv, bv| gv * bv)?;
                    let gb = g.zip_map(&self.nodes[a.0].value, |gv, av| gv * av)?;
                    accumulate(&mut grads, &self.nodes, *a, ga);
                    accumulate(&mut grads, &self.nodes, *b, gb);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, &self.nodes, *a, g.map(|v| v * c));
                }
                Op::Matmul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga = g.matmul(&bv.transposed())?;
                    let gb = av.transposed().matmul(&g)?;
                    accumulate(&mut grads, &self.nodes, *a, reshape_like(ga, av));
                    accumulate(&mut grads, &self.nodes, *b, reshape_like(gb, bv));
                }
                Op::Transpose(a) => {
                    let ga = g.transposed();
                    let av = &self.nodes[a.0].value;
                    accumulate(&mut grads, &self.nodes, *a, reshape_like(ga, av));
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(&self.nodes[a.0].value, |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |gv, yv| gv * yv)?;
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::Log(a) => {
                    // Below the clamp the forward is constant.
                    let ga = g.zip_map(&self.nodes[a.0].value, |gv, xv| {
                        if xv > EPS_LOG {
                            gv / xv
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::Sum(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga = Tensor::new_unchecked(
                        av.shape().to_vec(),
                        vec![g.item(); av.numel()],
                    );
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::Mean(a) => {
                    let av = &self.nodes[a.0].value;
                    let v = g.item() / av.numel() as f64;
                    let ga = Tensor::new_unchecked(av.shape().to_vec(), vec![v; av.numel()]);
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::Broadcast(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga = if av.is_scalar() {
                        Tensor::scalar(g.data().iter().sum())
                    } else {
                        // [d] broadcast over rows: column-sum.
                        let d = av.numel();
                        let mut out = vec![0.0; d];
                        for r in 0..g.rows() {
                            for (k, &v) in g.row(r).iter().enumerate() {
                                out[k] += v;
                            }
                        }
                        Tensor::new_unchecked(av.shape().to_vec(), out)
                    };
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::L2Normalize(a) => {
                    // y = x / n with n = sqrt(|x|^2 + eps), so
                    // dL/dx = (g - (g . y) y) / n.
                    let xv = &self.nodes[a.0].value;
                    let yv = &node.value;
                    let w = xv.row_len();
                    let mut out = Vec::with_capacity(xv.numel());
                    for r in 0..xv.rows() {
                        let x = xv.row(r);
                        let y = yv.row(r);
                        let gr = g.row(r);
                        let s: f64 = x.iter().map(|v| v * v).sum();
                        let inv = 1.0 / (s + EPS_NORM).sqrt();
                        let dot: f64 = gr.iter().zip(y).map(|(&gv, &yv)| gv * yv).sum();
                        for j in 0..w {
                            out.push((gr[j] - dot * y[j]) * inv);
                        }
                    }
                    let ga = Tensor::new_unchecked(xv.shape().to_vec(), out);
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::Softmax(a) => {
                    let yv = &node.value;
                    let w = yv.row_len();
                    let mut out = Vec::with_capacity(yv.numel());
                    for r in 0..yv.rows() {
                        let y = yv.row(r);
                        let gr = g.row(r);
                        let dot: f64 = gr.iter().zip(y).map(|(&gv, &yv)| gv * yv).sum();
                        for j in 0..w {
                            out.push(y[j] * (gr[j] - dot));
                        }
                    }
                    let av = &self.nodes[a.0].value;
                    let ga = Tensor::new_unchecked(av.shape().to_vec(), out);
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    let yv = &node.value;
                    let w = yv.row_len();
                    let mut out = Vec::with_capacity(yv.numel());
                    for r in 0..yv.rows() {
                        let y = yv.row(r);
                        let gr = g.row(r);
                        let gsum: f64 = gr.iter().sum();
                        for j in 0..w {
                            out.push(gr[j] - y[j].exp() * gsum);
                        }
                    }
                    let av = &self.nodes[a.0].value;
                    let ga = Tensor::new_unchecked(av.shape().to_vec(), out);
                    accumulate(&mut grads, &self.nodes, *a, ga);
                }
                Op::BatchNorm { x, gamma, beta, ctx } => {
                    let d = ctx.inv_std.len();
                    let n = ctx.x_hat.rows();
                    let gval = self.nodes[gamma.0].value.data();

                    let mut g_gamma = vec![0.0; d];
                    let mut g_beta = vec![0.0; d];
                    for r in 0..n {
                        let gr = g.row(r);
                        let xh = ctx.x_hat.row(r);
                        for k in 0..d {
                            g_gamma[k] += gr[k] * xh[k];
                            g_beta[k] += gr[k];
                        }
                    }

                    let gx = match ctx.mode {
                        BatchNormMode::Train => {
                            // Standard train-mode input gradient; the batch
                            // moments depend on every row.
                            let mut mean_g = vec![0.0; d];
                            let mut mean_gxh = vec![0.0; d];
                            for r in 0..n {
                                let gr = g.row(r);
                                let xh = ctx.x_hat.row(r);
                                for k in 0..d {
                                    mean_g[k] += gr[k];
                                    mean_gxh[k] += gr[k] * xh[k];
                                }
                            }
                            for k in 0..d {
                                mean_g[k] /= n as f64;
                                mean_gxh[k] /= n as f64;
                            }
                            let mut out = Vec::with_capacity(n * d);
                            for r in 0..n {
                                let gr = g.row(r);
                                let xh = ctx.x_hat.row(r);
                                for k in 0..d {
                                    out.push(
                                        gval[k]
                                            * ctx.inv_std[k]
                                            * (gr[k] - mean_g[k] - xh[k] * mean_gxh[k]),
                                    );
                                }
                            }
                            Tensor::new_unchecked(vec![n, d], out)
                        }
                        BatchNormMode::Eval => {
                            let mut out = Vec::with_capacity(n * d);
                            for r in 0..n {
                                let gr = g.row(r);
                                for k in 0..d {
                                    out.push(gr[k] * gval[k] * ctx.inv_std[k]);
                                }
                            }
                            Tensor::new_unchecked(vec![n, d], out)
                        }
                    };

                    let gamma_shape = self.nodes[gamma.0].value.shape().to_vec();
                    let beta_shape = self.nodes[beta.0].value.shape().to_vec();
                    accumulate(&mut grads, &self.nodes, *x, gx);
                    accumulate(
                        &mut grads,
                        &self.nodes,
                        *gamma,
                        Tensor::new_unchecked(gamma_shape, g_gamma),
                    );
                    accumulate(
                        &mut grads,
                        &self.nodes,
                        *beta,
                        Tensor::new_unchecked(beta_shape, g_beta),
                    );
                }
            }
        }

        // Interior gradients were consumed as we walked; re-expose only
        // leaf gradients.
        for (idx, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.value.requires_grad() {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn softmax_row(row: &[f64], out: &mut Vec<f64>) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    let mut total = 0.0;
    for &v in row {
        let e = (v - m).exp();
        total += e;
        out.push(e);
    }
    for v in &mut out[start..] {
        *v /= total;
    }
}

/// Matmul promotes 1-D operands to matrices; fold the gradient back to
/// the operand's original shape.
fn reshape_like(g: Tensor, reference: &Tensor) -> Tensor {
    if g.shape() == reference.shape() {
        g
    } else {
        debug_assert_eq!(g.numel(), reference.numel());
        Tensor::new_unchecked(reference.shape().to_vec(), g.data().to_vec())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], target: NodeId, g: Tensor) {
    if !nodes[target.0].needs_grad {
        return;
    }
    match &mut grads[target.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), g.shape());
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn leaf_grad(tape: &mut Tape, t: Tensor) -> NodeId {
        tape.leaf(t.with_requires_grad(true))
    }

    #[test]
    fn relu_matches_definition() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0; 5]));
        let y = tape.softmax(x);
        for &p in tape.value(y).data() {
            assert_abs_diff_eq!(p, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn l2_normalize_three_four_five() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let y = tape.l2_normalize(x);
        let out = tape.value(y).data();
        assert_abs_diff_eq!(out[0], 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(out[1], 0.8, epsilon = 1e-9);
    }

    #[test]
    fn l2_normalize_zero_maps_to_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = tape.l2_normalize(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let z: Vec<f64> = (0..7).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c: f64 = rng.gen_range(-100.0..100.0);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let mut t1 = Tape::new();
            let a = t1.constant(Tensor::vector(z));
            let pa = t1.softmax(a);
            let mut t2 = Tape::new();
            let b = t2.constant(Tensor::vector(shifted));
            let pb = t2.softmax(b);
            for (x, y) in t1.value(pa).data().iter().zip(t2.value(pb).data()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, Tensor::vector(vec![1.0, 2.0]));
        let y = tape.relu(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn relu_backward_masks_negative_inputs() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, Tensor::vector(vec![1.0, -2.0, 0.5]));
        let y = tape.relu(x);
        let loss = tape.sum(y);
        let mut grads = tape.backward(loss).unwrap();
        assert_eq!(grads.take(x).unwrap().data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_onehot() {
        // loss = -sum(e_y * log_softmax(z)); d/dz = p - e_y
        let z = vec![0.3, -1.2, 2.0, 0.0];
        let y = 2usize;
        let mut tape = Tape::new();
        let zi = leaf_grad(&mut tape, Tensor::vector(z.clone()));
        let mut onehot = vec![0.0; 4];
        onehot[y] = 1.0;
        let t = tape.constant(Tensor::vector(onehot.clone()));
        let lsm = tape.log_softmax(zi);
        let prod = tape.mul(t, lsm).unwrap();
        let s = tape.sum(prod);
        let loss = tape.scale(s, -1.0);

        // expected p
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|e| e / total).collect();

        let mut grads = tape.backward(loss).unwrap();
        let gz = grads.take(zi).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(gz.data()[k], p[k] - onehot[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn fan_out_gradients_accumulate() {
        // loss = sum(x * x): d/dx = 2x via the two uses of x.
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, Tensor::vector(vec![1.5, -0.5]));
        let prod = tape.mul(x, x).unwrap();
        let loss = tape.sum(prod);
        let mut grads = tape.backward(loss).unwrap();
        assert_eq!(grads.take(x).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn constant_leaves_get_no_gradient() {
        let mut tape = Tape::new();
        let x = leaf_grad(&mut tape, Tensor::vector(vec![1.0, 2.0]));
        let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let prod = tape.mul(x, c).unwrap();
        let loss = tape.sum(prod);
        let mut grads = tape.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.take(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn train_batchnorm_normalizes_batch() {
        let mut tape = Tape::new();
        let x = tape.constant(
            Tensor::from_vec(vec![4, 2], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0])
                .unwrap(),
        );
        let gamma = tape.constant(Tensor::vector(vec![1.0, 1.0]));
        let beta = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let (y, stats) = tape
            .batchnorm(x, gamma, beta, &[], &[], BatchNormMode::Train)
            .unwrap();
        let stats = stats.unwrap();
        assert_abs_diff_eq!(stats.mean[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.mean[1], 25.0, epsilon = 1e-12);
        let out = tape.value(y);
        for k in 0..2 {
            let col: Vec<f64> = (0..4).map(|r| out.row(r)[k]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 4.0;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-4);
        }
    }
}
