//! Layered network descriptions and their parameter plumbing.
//!
//! A [`NetSpec`] is a plain layer list with per-sample shape inference; a
//! [`Network`] owns the parameter ids inside a [`ParamStore`] and knows how
//! to replay itself onto a [`Graph`]. Initialization follows the DCGAN
//! convention: kernels and weights are zero-mean Gaussians with standard
//! deviation 0.02, biases start at zero, batch-norm gain at N(1, 0.02).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::conv_out_size;
use crate::error::{Error, Result};
use crate::graph::{Activation, Graph, NodeId};
use crate::params::{ParamId, ParamStore};
use crate::rng::SeedRng;
use crate::tensor::Tensor;

pub const WEIGHT_INIT_STD: f64 = 0.02;
pub const BN_EPS: f64 = 1e-5;
/// EMA weight of the current batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// One layer of a sequential network. Shapes are per sample (no batch axis).
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Linear {
        out: usize,
        bias: bool,
    },
    Conv {
        out_channels: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    ConvTranspose {
        out_channels: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm,
    Activation(Activation),
    Reshape(Vec<usize>),
    Flatten,
    CropCenter {
        h: usize,
        w: usize,
    },
}

/// A sequential architecture: input shape plus layer list.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        NetSpec {
            input_shape,
            layers,
        }
    }

    /// Per-sample shape after each layer; errors on any inconsistency
    /// (non-integer convolution sizes, rank mismatches, ...).
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = self.layer_shape(i, layer, &cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    fn layer_shape(&self, i: usize, layer: &LayerSpec, cur: &[usize]) -> Result<Vec<usize>> {
        let bad = |msg: String| Err(Error::Config(format!("layer {i}: {msg}")));
        match layer {
            LayerSpec::Linear { out, .. } => {
                if cur.len() != 1 {
                    return bad(format!("linear needs a flat input, got {cur:?}"));
                }
                Ok(vec![*out])
            }
            LayerSpec::Conv {
                out_channels,
                k,
                stride,
                pad,
                ..
            } => {
                if cur.len() != 3 {
                    return bad(format!("conv needs [c,h,w], got {cur:?}"));
                }
                Ok(vec![
                    *out_channels,
                    conv_out_size(cur[1], *k, *stride, *pad)?,
                    conv_out_size(cur[2], *k, *stride, *pad)?,
                ])
            }
            LayerSpec::ConvTranspose {
                out_channels,
                k,
                stride,
                pad,
                ..
            } => {
                if cur.len() != 3 {
                    return bad(format!("conv_transpose needs [c,h,w], got {cur:?}"));
                }
                let grow = |n: usize| -> Result<usize> {
                    let g = (n - 1) * stride + k;
                    if g <= 2 * pad {
                        return Err(Error::Config(format!(
                            "layer {i}: transposed output not positive"
                        )));
                    }
                    Ok(g - 2 * pad)
                };
                Ok(vec![*out_channels, grow(cur[1])?, grow(cur[2])?])
            }
            LayerSpec::BatchNorm => Ok(cur.to_vec()),
            LayerSpec::Activation(_) => Ok(cur.to_vec()),
            LayerSpec::Reshape(target) => {
                let n: usize = cur.iter().product();
                let m: usize = target.iter().product();
                if n != m {
                    return bad(format!("reshape {cur:?} -> {target:?} changes element count"));
                }
                Ok(target.clone())
            }
            LayerSpec::Flatten => Ok(vec![cur.iter().product()]),
            LayerSpec::CropCenter { h, w } => {
                if cur.len() != 3 || cur[1] < *h || cur[2] < *w {
                    return bad(format!("cannot crop {cur:?} to {h}x{w}"));
                }
                Ok(vec![cur[0], *h, *w])
            }
        }
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self
            .shapes()?
            .last()
            .cloned()
            .unwrap_or_else(|| self.input_shape.clone()))
    }
}

#[derive(Clone, Debug)]
enum LayerParams {
    Linear {
        w: ParamId,
        b: Option<ParamId>,
    },
    Conv {
        kernel: ParamId,
        b: Option<ParamId>,
    },
    BatchNorm {
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
    },
    Stateless,
}

/// A spec bound to parameters inside a store.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetSpec,
    params: Vec<LayerParams>,
}

impl Network {
    /// Create and initialize all parameters under `prefix` in `store`.
    pub fn init(
        spec: NetSpec,
        prefix: &str,
        store: &mut ParamStore,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut params = Vec::with_capacity(spec.layers.len());
        let mut cur: &[usize] = &spec.input_shape;
        for (i, layer) in spec.layers.iter().enumerate() {
            let gauss = |rng: &mut SeedRng, shape: &[usize]| {
                let n: usize = shape.iter().product();
                Tensor::new(
                    shape.to_vec(),
                    (0..n).map(|_| WEIGHT_INIT_STD * rng.normal()).collect(),
                )
                .unwrap()
            };
            let lp = match layer {
                LayerSpec::Linear { out, bias } => {
                    let w = store.add(format!("{prefix}.{i}.weight"), gauss(rng, &[*out, cur[0]]), true);
                    let b = bias.then(|| {
                        store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[*out]), true)
                    });
                    LayerParams::Linear { w, b }
                }
                LayerSpec::Conv {
                    out_channels,
                    k,
                    bias,
                    ..
                } => {
                    let kernel = store.add(
                        format!("{prefix}.{i}.kernel"),
                        gauss(rng, &[*out_channels, cur[0], *k, *k]),
                        true,
                    );
                    let b = bias.then(|| {
                        store.add(
                            format!("{prefix}.{i}.bias"),
                            Tensor::zeros(&[*out_channels]),
                            true,
                        )
                    });
                    LayerParams::Conv { kernel, b }
                }
                LayerSpec::ConvTranspose {
                    out_channels,
                    k,
                    bias,
                    ..
                } => {
                    let kernel = store.add(
                        format!("{prefix}.{i}.kernel"),
                        gauss(rng, &[cur[0], *out_channels, *k, *k]),
                        true,
                    );
                    let b = bias.then(|| {
                        store.add(
                            format!("{prefix}.{i}.bias"),
                            Tensor::zeros(&[*out_channels]),
                            true,
                        )
                    });
                    LayerParams::Conv { kernel, b }
                }
                LayerSpec::BatchNorm => {
                    let c = cur[0];
                    let gamma_init = Tensor::new(
                        vec![c],
                        (0..c).map(|_| 1.0 + WEIGHT_INIT_STD * rng.normal()).collect(),
                    )?;
                    LayerParams::BatchNorm {
                        gamma: store.add(format!("{prefix}.{i}.gamma"), gamma_init, true),
                        beta: store.add(format!("{prefix}.{i}.beta"), Tensor::zeros(&[c]), true),
                        running_mean: store.add(
                            format!("{prefix}.{i}.running_mean"),
                            Tensor::zeros(&[c]),
                            false,
                        ),
                        running_var: store.add(
                            format!("{prefix}.{i}.running_var"),
                            Tensor::filled(&[c], 1.0),
                            false,
                        ),
                    }
                }
                _ => LayerParams::Stateless,
            };
            params.push(lp);
            cur = &shapes[i];
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    /// All parameter ids of this network (trainable and buffers).
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for lp in &self.params {
            match lp {
                LayerParams::Linear { w, b } => {
                    ids.push(*w);
                    ids.extend(b);
                }
                LayerParams::Conv { kernel, b } => {
                    ids.push(*kernel);
                    ids.extend(b);
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => ids.extend([*gamma, *beta, *running_mean, *running_var]),
                LayerParams::Stateless => {}
            }
        }
        ids
    }

    pub fn trainable_ids(&self, store: &ParamStore) -> Vec<ParamId> {
        self.param_ids()
            .into_iter()
            .filter(|&id| store.is_trainable(id))
            .collect()
    }

    /// Replay the network on `g` starting from node `input` (shape
    /// `[batch] + input_shape`). In `Train` mode batch-norm running
    /// statistics are EMA-updated unless the network is `frozen`; a frozen
    /// network also receives no gradients.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &mut ParamStore,
        input: NodeId,
        frozen: bool,
    ) -> Result<NodeId> {
        let mut cur = input;
        let batch = g.value(input).shape()[0];
        for (layer, lp) in self.spec.layers.iter().zip(&self.params) {
            cur = match (layer, lp) {
                (LayerSpec::Linear { .. }, LayerParams::Linear { w, b }) => {
                    let wn = g.param(store, *w, frozen);
                    let bn = b.map(|b| g.param(store, b, frozen));
                    g.linear(cur, wn, bn)?
                }
                (
                    LayerSpec::Conv { stride, pad, .. },
                    LayerParams::Conv { kernel, b },
                ) => {
                    let kn = g.param(store, *kernel, frozen);
                    let bn = b.map(|b| g.param(store, b, frozen));
                    g.conv2d(cur, kn, bn, *stride, *pad)?
                }
                (
                    LayerSpec::ConvTranspose { stride, pad, .. },
                    LayerParams::Conv { kernel, b },
                ) => {
                    let kn = g.param(store, *kernel, frozen);
                    let bn = b.map(|b| g.param(store, b, frozen));
                    g.conv_transpose2d(cur, kn, bn, *stride, *pad)?
                }
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let gn = g.param(store, *gamma, frozen);
                    let bn = g.param(store, *beta, frozen);
                    let rm = store.value(*running_mean).clone();
                    let rv = store.value(*running_var).clone();
                    let (node, stats) = g.batch_norm(cur, gn, bn, (&rm, &rv), BN_EPS)?;
                    if let Some(stats) = stats {
                        if !frozen {
                            let ema = |old: &Tensor, new: &[f64]| {
                                Tensor::new(
                                    old.shape().to_vec(),
                                    old.data()
                                        .iter()
                                        .zip(new)
                                        .map(|(&o, &n)| (1.0 - BN_MOMENTUM) * o + BN_MOMENTUM * n)
                                        .collect(),
                                )
                                .unwrap()
                            };
                            store.set_value(*running_mean, ema(&rm, &stats.mean));
                            store.set_value(*running_var, ema(&rv, &stats.var));
                        }
                    }
                    node
                }
                (LayerSpec::Activation(kind), _) => g.activation(cur, *kind)?,
                (LayerSpec::Reshape(target), _) => {
                    let mut shape = vec![batch];
                    shape.extend_from_slice(target);
                    g.reshape(cur, shape)?
                }
                (LayerSpec::Flatten, _) => {
                    let numel = g.value(cur).numel() / batch;
                    g.reshape(cur, vec![batch, numel])?
                }
                (LayerSpec::CropCenter { h, w }, _) => g.crop_center(cur, *h, *w)?,
                _ => {
                    return Err(Error::Config(
                        "layer spec and parameter kinds diverged".into(),
                    ))
                }
            };
        }
        Ok(cur)
    }
}

/// DCGAN-style generator: one fully connected layer fans the latent vector
/// out to a `channels[0] x base x base` map, each transposed convolution
/// doubles the resolution, and a center crop trims the final map to the
/// target before the tanh output. `channels` lists the feature widths of
/// the hidden maps; the output has `out_shape = [c, h, w]`.
pub fn dcgan_generator(
    z_dim: usize,
    channels: &[usize],
    out_shape: [usize; 3],
    slope: f64,
    batchnorm: bool,
) -> Result<NetSpec> {
    if z_dim == 0 || channels.is_empty() {
        return Err(Error::Config("generator needs z_dim > 0 and channels".into()));
    }
    let n = channels.len();
    let factor = 1usize << n;
    let base_h = out_shape[1].div_ceil(factor);
    let base_w = out_shape[2].div_ceil(factor);
    let mut layers = vec![
        LayerSpec::Linear {
            out: channels[0] * base_h * base_w,
            bias: !batchnorm,
        },
        LayerSpec::Reshape(vec![channels[0], base_h, base_w]),
    ];
    if batchnorm {
        layers.push(LayerSpec::BatchNorm);
    }
    layers.push(LayerSpec::Activation(Activation::LeakyRelu(slope)));
    for i in 0..n {
        let last = i == n - 1;
        let out_channels = if last { out_shape[0] } else { channels[i + 1] };
        layers.push(LayerSpec::ConvTranspose {
            out_channels,
            k: 4,
            stride: 2,
            pad: 1,
            bias: last || !batchnorm,
        });
        if !last {
            if batchnorm {
                layers.push(LayerSpec::BatchNorm);
            }
            layers.push(LayerSpec::Activation(Activation::LeakyRelu(slope)));
        }
    }
    layers.push(LayerSpec::CropCenter {
        h: out_shape[1],
        w: out_shape[2],
    });
    layers.push(LayerSpec::Activation(Activation::Tanh));
    Ok(NetSpec::new(vec![z_dim], layers))
}

/// DCGAN-style critic: strided convolutions halve the resolution (kernel 4
/// on even sizes, 3 on odd ones, so sizes always divide cleanly), then one
/// fully connected layer maps the flattened features to a single unbounded
/// score. Batch norm is never applied to the first convolution.
pub fn dcgan_critic(
    in_shape: [usize; 3],
    channels: &[usize],
    slope: f64,
    batchnorm: bool,
) -> Result<NetSpec> {
    if channels.is_empty() {
        return Err(Error::Config("critic needs at least one channel width".into()));
    }
    let mut layers = Vec::new();
    let (mut h, mut w) = (in_shape[1], in_shape[2]);
    for (i, &c) in channels.iter().enumerate() {
        let k_for = |n: usize| if n.is_multiple_of(2) { 4 } else { 3 };
        let k = k_for(h);
        if k_for(w) != k {
            return Err(Error::Config(format!(
                "critic needs h and w of equal parity, got {h}x{w}"
            )));
        }
        let with_bn = batchnorm && i > 0;
        layers.push(LayerSpec::Conv {
            out_channels: c,
            k,
            stride: 2,
            pad: 1,
            bias: !with_bn,
        });
        if with_bn {
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Activation(Activation::LeakyRelu(slope)));
        h = (h + 2 - k) / 2 + 1;
        w = (w + 2 - k) / 2 + 1;
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Linear { out: 1, bias: true });
    Ok(NetSpec::new(in_shape.to_vec(), layers))
}
