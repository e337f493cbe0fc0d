//! Reverse-mode automatic differentiation on a dynamic operation graph.
//!
//! A [`Graph`] is rebuilt per forward pass: every operation appends a node
//! holding its kind, input node ids and cached forward value, so node ids
//! are already topologically ordered and `backward` is a single reverse
//! sweep. Construction and backward are single-threaded per graph; the
//! tensors inside are immutable and shareable.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::gemm;
use crate::math;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Node index inside one [`Graph`].
pub type NodeId = usize;

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Tanh,
    /// Slope `alpha` on the negative half-axis, `alpha` in (0, 1).
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Tanh => math::tanh(x),
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + math::exp(-x)),
        }
    }

    /// Derivative expressed from input `x` and output `y`.
    fn derivative(&self, x: f64, y: f64) -> f64 {
        match *self {
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Whether batch norm consumes batch statistics (training) or running
/// statistics (inference).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel statistics of one batch, reported so the owner can update
/// running averages.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    train: bool,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Conv2d {
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    Activation {
        x: NodeId,
        kind: Activation,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        cache: BnCache,
    },
    Reshape {
        x: NodeId,
    },
    CropCenter {
        x: NodeId,
        off_h: usize,
        off_w: usize,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    Neg {
        x: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    WeightedSum {
        x: NodeId,
        weights: Tensor,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients per node produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient that reached `node`, if any.
    pub fn node(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node).and_then(|g| g.as_ref())
    }
}

/// Dynamic computation graph recording one forward composition.
pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        Graph {
            nodes: Vec::new(),
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cached forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    /// Constant input: no gradient flows into it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value, false)
    }

    /// Differentiable input (e.g. a latent vector under a sensitivity probe).
    pub fn var(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value, true)
    }

    /// Leaf tied to a stored parameter; gradients are collected per
    /// parameter by [`Graph::param_grads`]. A frozen parameter participates
    /// in the forward pass but receives no gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId, frozen: bool) -> NodeId {
        let trainable = store.is_trainable(id) && !frozen;
        self.push(
            Op::Leaf { param: Some(id) },
            store.value(id).clone(),
            trainable,
        )
    }

    /// `out[b,o] = sum_i w[o,i] x[b,i] + bias[o]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape("linear", &xs, &ws));
        }
        let (batch, dim_in, dim_out) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            let bs = self.value(b).shape();
            if bs != [dim_out] {
                return Err(Error::shape("linear bias", &ws, bs));
            }
        }
        let mut out = vec![0.0; batch * dim_out];
        if let Some(bn) = b {
            let bias = self.value(bn).data();
            for row in out.chunks_exact_mut(dim_out) {
                row.copy_from_slice(bias);
            }
        }
        gemm::dgemm_a_bt_acc(
            batch,
            dim_in,
            dim_out,
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![batch, dim_out], out)?;
        Ok(self.push(Op::Linear { x, w, b }, value, needs))
    }

    fn conv_args(&self, x: NodeId, kernel: NodeId) -> Result<(Vec<usize>, Vec<usize>)> {
        let xs = self.value(x).shape().to_vec();
        let ks = self.value(kernel).shape().to_vec();
        if xs.len() != 4 || ks.len() != 4 || ks[2] != ks[3] {
            return Err(Error::shape("conv2d", &xs, &ks));
        }
        Ok((xs, ks))
    }

    /// Standard cross-correlation of `[b, cin, h, w]` with
    /// `[cout, cin, k, k]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (xs, ks) = self.conv_args(x, kernel)?;
        if xs[1] != ks[1] {
            return Err(Error::shape("conv2d channels", &xs, &ks));
        }
        let geom = ConvGeom::forward(ks[1], ks[0], ks[2], stride, pad, xs[2], xs[3])?;
        let batch = xs[0];
        let mut out = conv::conv_fwd(batch, self.value(x).data(), self.value(kernel).data(), &geom);
        if let Some(bn) = bias {
            let b = self.value(bn);
            if b.shape() != [geom.cout] {
                return Err(Error::shape("conv2d bias", &ks, b.shape()));
            }
            conv::add_channel_bias(batch, &mut out, b.data(), geom.out_h * geom.out_w);
        }
        let needs = self.needs(x) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![batch, geom.cout, geom.out_h, geom.out_w], out)?;
        Ok(self.push(
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            },
            value,
            needs,
        ))
    }

    /// Fractionally-strided (transposed) convolution: the adjoint of
    /// [`Graph::conv2d`] for the same `(kernel, stride, pad)`. Kernel layout
    /// is `[cin, cout, k, k]` with `cin` the channels of `x`.
    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (xs, ks) = self.conv_args(x, kernel)?;
        if xs[1] != ks[0] {
            return Err(Error::shape("conv_transpose2d channels", &xs, &ks));
        }
        let geom = ConvGeom::transposed(ks[1], ks[0], ks[2], stride, pad, xs[2], xs[3])?;
        let batch = xs[0];
        let mut out = conv::conv_dx(batch, self.value(x).data(), self.value(kernel).data(), &geom);
        if let Some(bn) = bias {
            let b = self.value(bn);
            if b.shape() != [geom.cin] {
                return Err(Error::shape("conv_transpose2d bias", &ks, b.shape()));
            }
            conv::add_channel_bias(batch, &mut out, b.data(), geom.h * geom.w);
        }
        let needs = self.needs(x) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![batch, geom.cin, geom.h, geom.w], out)?;
        Ok(self.push(
            Op::ConvTranspose2d {
                x,
                kernel,
                bias,
                geom,
            },
            value,
            needs,
        ))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        if let Activation::LeakyRelu(a) = kind {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!(
                    "leaky_relu slope {a} must lie in (0, 1)"
                )));
            }
        }
        let value = self.value(x).map(|v| kind.apply(v));
        let needs = self.needs(x);
        Ok(self.push(Op::Activation { x, kind }, value, needs))
    }

    /// Batch normalization over all axes but the channel axis (axis 1 of a
    /// 4-D activation, axis 1 of a 2-D one). In `Train` mode the batch
    /// statistics are used and returned so the caller can maintain running
    /// averages; in `Eval` mode `running` is used and no stats are returned.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running: (&Tensor, &Tensor),
        eps: f64,
    ) -> Result<(NodeId, Option<BatchStats>)> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 2 && xs.len() != 4 {
            return Err(Error::shape("batch_norm", &xs, &[]));
        }
        let channels = xs[1];
        let spatial: usize = xs[2..].iter().product::<usize>().max(1);
        let batch = xs[0];
        let per_channel = batch * spatial;
        for (name, t) in [("gamma", gamma), ("beta", beta)] {
            if self.value(t).shape() != [channels] {
                return Err(Error::Config(format!(
                    "batch_norm {name} must have shape [{channels}]"
                )));
            }
        }

        let data = self.value(x).data();
        let channel_iter = |c: usize| {
            (0..batch).flat_map(move |s| {
                let base = (s * channels + c) * spatial;
                base..base + spatial
            })
        };

        let (mean, var) = if self.mode == Mode::Train {
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for c in 0..channels {
                let m = channel_iter(c).map(|i| data[i]).sum::<f64>() / per_channel as f64;
                let v = channel_iter(c)
                    .map(|i| (data[i] - m) * (data[i] - m))
                    .sum::<f64>()
                    / per_channel as f64;
                mean[c] = m;
                var[c] = v;
            }
            (mean, var)
        } else {
            (running.0.data().to_vec(), running.1.data().to_vec())
        };

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / math::sqrt(v + eps)).collect();
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let mut xhat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        for c in 0..channels {
            for i in channel_iter(c) {
                let xh = (data[i] - mean[c]) * inv_std[c];
                xhat[i] = xh;
                out[i] = g[c] * xh + b[c];
            }
        }

        let train = self.mode == Mode::Train;
        let stats = train.then(|| BatchStats {
            mean: mean.clone(),
            var: var.clone(),
        });
        let cache = BnCache {
            xhat: Tensor::new(xs.clone(), xhat)?,
            inv_std,
            train,
        };
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let value = Tensor::new(xs, out)?;
        let id = self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                cache,
            },
            value,
            needs,
        );
        Ok((id, stats))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(Op::Reshape { x }, value, needs))
    }

    /// Center crop of the two trailing spatial axes of `[b, c, h, w]`.
    pub fn crop_center(&mut self, x: NodeId, out_h: usize, out_w: usize) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || xs[2] < out_h || xs[3] < out_w || out_h == 0 || out_w == 0 {
            return Err(Error::shape("crop_center", &xs, &[out_h, out_w]));
        }
        let (off_h, off_w) = ((xs[2] - out_h) / 2, (xs[3] - out_w) / 2);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(xs[0] * xs[1] * out_h * out_w);
        for sc in 0..xs[0] * xs[1] {
            let plane = &data[sc * xs[2] * xs[3]..(sc + 1) * xs[2] * xs[3]];
            for y in 0..out_h {
                let row = (y + off_h) * xs[3] + off_w;
                out.extend_from_slice(&plane[row..row + out_w]);
            }
        }
        let needs = self.needs(x);
        let value = Tensor::new(vec![xs[0], xs[1], out_h, out_w], out)?;
        Ok(self.push(Op::CropCenter { x, off_h, off_w }, value, needs))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        let needs = self.needs(x);
        self.push(Op::Sum { x }, v, needs)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel() as f64;
        let v = Tensor::scalar(self.value(x).data().iter().sum::<f64>() / n);
        let needs = self.needs(x);
        self.push(Op::Mean { x }, v, needs)
    }

    /// Scalar probe `sum(weights .* x)`; its gradient w.r.t. `x` is exactly
    /// `weights`, which makes it the standard seed for sensitivity checks.
    pub fn weighted_sum(&mut self, x: NodeId, weights: &Tensor) -> Result<NodeId> {
        if weights.shape() != self.value(x).shape() {
            return Err(Error::shape(
                "weighted_sum",
                self.value(x).shape(),
                weights.shape(),
            ));
        }
        let v = Tensor::scalar(math::dot(self.value(x).data(), weights.data()));
        let needs = self.needs(x);
        Ok(self.push(
            Op::WeightedSum {
                x,
                weights: weights.clone(),
            },
            v,
            needs,
        ))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| -a);
        let needs = self.needs(x);
        self.push(Op::Neg { x }, v, needs)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|a| c * a);
        let needs = self.needs(x);
        self.push(Op::Scale { x, c }, v, needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip(self.value(b), |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Sub { a, b }, v, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip(self.value(b), |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add { a, b }, v, needs))
    }

    /// Exact reverse-mode gradients of the scalar `loss` node with respect
    /// to every node that can receive one.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let Some(dy) = grads[id].take() else {
                continue;
            };
            // Re-stash: callers may want the gradient of interior nodes.
            let out_grad = dy;
            self.backward_op(id, &out_grad, &mut grads)?;
            grads[id] = Some(out_grad);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|v| Tensor::new(self.nodes[i].value.shape().to_vec(), v).unwrap()))
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        node: NodeId,
        contribution: impl FnOnce() -> Vec<f64>,
    ) {
        if !self.needs(node) {
            return;
        }
        let contrib = contribution();
        debug_assert_eq!(contrib.len(), self.nodes[node].value.numel());
        match &mut grads[node] {
            Some(acc) => {
                for (a, c) in acc.iter_mut().zip(contrib) {
                    *a += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn backward_op(
        &self,
        id: NodeId,
        dy: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf { .. } => {}
            Op::Linear { x, w, b } => {
                let xs = self.value(*x).shape();
                let ws = self.value(*w).shape();
                let (batch, dim_in, dim_out) = (xs[0], xs[1], ws[0]);
                self.accumulate(grads, *x, || {
                    let mut dx = vec![0.0; batch * dim_in];
                    gemm::dgemm(
                        batch,
                        dim_out,
                        dim_in,
                        1.0,
                        dy,
                        self.value(*w).data(),
                        0.0,
                        &mut dx,
                    );
                    dx
                });
                self.accumulate(grads, *w, || {
                    let mut dw = vec![0.0; dim_out * dim_in];
                    gemm::dgemm_at_b(dim_out, batch, dim_in, dy, self.value(*x).data(), &mut dw);
                    dw
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, || {
                        let mut db = vec![0.0; dim_out];
                        for row in dy.chunks_exact(dim_out) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        db
                    });
                }
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            } => {
                let batch = self.value(*x).shape()[0];
                self.accumulate(grads, *x, || {
                    conv::conv_dx(batch, dy, self.value(*kernel).data(), geom)
                });
                self.accumulate(grads, *kernel, || {
                    conv::conv_dw(batch, self.value(*x).data(), dy, geom)
                });
                if let Some(b) = bias {
                    self.accumulate(grads, *b, || conv::conv_db(batch, dy, geom));
                }
            }
            Op::ConvTranspose2d {
                x,
                kernel,
                bias,
                geom,
            } => {
                let batch = self.value(*x).shape()[0];
                self.accumulate(grads, *x, || {
                    conv::conv_fwd(batch, dy, self.value(*kernel).data(), geom)
                });
                self.accumulate(grads, *kernel, || {
                    // Image/feature roles swap for the adjoint's kernel grad.
                    conv::conv_dw(batch, dy, self.value(*x).data(), geom)
                });
                if let Some(b) = bias {
                    self.accumulate(grads, *b, || {
                        let hw = geom.h * geom.w;
                        let mut db = vec![0.0; geom.cin];
                        for s in 0..batch {
                            for (c, d) in db.iter_mut().enumerate() {
                                let base = (s * geom.cin + c) * hw;
                                *d += dy[base..base + hw].iter().sum::<f64>();
                            }
                        }
                        db
                    });
                }
            }
            Op::Activation { x, kind } => {
                self.accumulate(grads, *x, || {
                    let xin = self.value(*x).data();
                    let yout = self.value(id).data();
                    dy.iter()
                        .zip(xin.iter().zip(yout))
                        .map(|(d, (&xi, &yi))| d * kind.derivative(xi, yi))
                        .collect()
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let xs = self.value(*x).shape();
                let channels = xs[1];
                let spatial: usize = xs[2..].iter().product::<usize>().max(1);
                let batch = xs[0];
                let m = (batch * spatial) as f64;
                let xhat = cache.xhat.data();
                let g = self.value(*gamma).data();
                let channel_iter = |c: usize| {
                    (0..batch).flat_map(move |s| {
                        let base = (s * channels + c) * spatial;
                        base..base + spatial
                    })
                };
                self.accumulate(grads, *gamma, || {
                    (0..channels)
                        .map(|c| channel_iter(c).map(|i| dy[i] * xhat[i]).sum())
                        .collect()
                });
                self.accumulate(grads, *beta, || {
                    (0..channels)
                        .map(|c| channel_iter(c).map(|i| dy[i]).sum())
                        .collect()
                });
                self.accumulate(grads, *x, || {
                    let mut dx = vec![0.0; dy.len()];
                    #[allow(clippy::needless_range_loop)] // c indexes three arrays
                    for c in 0..channels {
                        let scale = g[c] * cache.inv_std[c];
                        if cache.train {
                            let sum_dy: f64 = channel_iter(c).map(|i| dy[i]).sum();
                            let sum_dy_xhat: f64 = channel_iter(c).map(|i| dy[i] * xhat[i]).sum();
                            for i in channel_iter(c) {
                                dx[i] = scale * (dy[i] - sum_dy / m - xhat[i] * sum_dy_xhat / m);
                            }
                        } else {
                            for i in channel_iter(c) {
                                dx[i] = scale * dy[i];
                            }
                        }
                    }
                    dx
                });
            }
            Op::Reshape { x } => {
                self.accumulate(grads, *x, || dy.to_vec());
            }
            Op::CropCenter { x, off_h, off_w } => {
                let xs = self.value(*x).shape();
                let os = self.value(id).shape();
                let (h, w, oh, ow) = (xs[2], xs[3], os[2], os[3]);
                self.accumulate(grads, *x, || {
                    let mut dx = vec![0.0; self.value(*x).numel()];
                    for sc in 0..xs[0] * xs[1] {
                        for y in 0..oh {
                            let src = (sc * oh + y) * ow;
                            let dst = sc * h * w + (y + off_h) * w + off_w;
                            dx[dst..dst + ow].copy_from_slice(&dy[src..src + ow]);
                        }
                    }
                    dx
                });
            }
            Op::Sum { x } => {
                let d = dy[0];
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, || vec![d; n]);
            }
            Op::Mean { x } => {
                let n = self.value(*x).numel();
                let d = dy[0] / n as f64;
                self.accumulate(grads, *x, || vec![d; n]);
            }
            Op::WeightedSum { x, weights } => {
                let d = dy[0];
                self.accumulate(grads, *x, || weights.data().iter().map(|w| d * w).collect());
            }
            Op::Neg { x } => {
                self.accumulate(grads, *x, || dy.iter().map(|d| -d).collect());
            }
            Op::Scale { x, c } => {
                let c = *c;
                self.accumulate(grads, *x, || dy.iter().map(|d| c * d).collect());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, || dy.to_vec());
                self.accumulate(grads, *b, || dy.iter().map(|d| -d).collect());
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, || dy.to_vec());
                self.accumulate(grads, *b, || dy.to_vec());
            }
        }
        Ok(())
    }

    /// Gradients aligned with a [`ParamStore`]: trainable parameters that
    /// did not influence the loss get zero tensors.
    pub fn param_grads(&self, gradients: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = (0..store.len())
            .map(|i| Tensor::zeros(store.value(i).shape()))
            .collect();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(pid) } = node.op {
                if let Some(g) = gradients.node(id) {
                    let acc: Vec<f64> = out[pid]
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(a, b)| a + b)
                        .collect();
                    out[pid] = Tensor::new(out[pid].shape().to_vec(), acc).unwrap();
                }
            }
        }
        out
    }
}
