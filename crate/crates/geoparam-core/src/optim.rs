//! RMSProp parameter updates and hard weight clipping.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// RMSProp hyperparameters. Defaults: lr 5e-5, decay 0.9, epsilon 1e-8.
#[derive(Clone, Copy, Debug)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 5e-5,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) || self.eps <= 0.0 || self.lr <= 0.0 {
            return Err(Error::Config(alloc::format!(
                "rmsprop needs lr > 0, rho in (0,1), eps > 0; got lr={} rho={} eps={}",
                self.lr,
                self.rho,
                self.eps
            )));
        }
        Ok(())
    }
}

/// Per-parameter squared-gradient accumulators, one tensor per tracked
/// parameter, shapes matching one-to-one.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    ids: Vec<ParamId>,
    acc: Vec<Tensor>,
}

impl OptimizerState {
    /// Zero accumulators for the given parameters.
    pub fn new(store: &ParamStore, ids: Vec<ParamId>) -> Self {
        let acc = ids
            .iter()
            .map(|&id| Tensor::zeros(store.value(id).shape()))
            .collect();
        OptimizerState { ids, acc }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn accumulator(&self, i: usize) -> &Tensor {
        &self.acc[i]
    }

    /// Replace an accumulator (used when restoring a checkpoint).
    pub fn set_accumulator(&mut self, i: usize, t: Tensor) {
        assert_eq!(self.acc[i].shape(), t.shape());
        self.acc[i] = t;
    }
}

/// One RMSProp step over the tracked parameters:
/// `acc <- rho*acc + (1-rho)*g^2; p <- p - lr*g/(sqrt(acc) + eps)`.
///
/// `grads` must be aligned with the full store (as produced by
/// `Graph::param_grads`).
pub fn rmsprop_step(
    store: &mut ParamStore,
    grads: &[Tensor],
    state: &mut OptimizerState,
    cfg: &RmsPropConfig,
) -> Result<()> {
    cfg.validate()?;
    if grads.len() != store.len() {
        return Err(Error::ShapeMismatch {
            op: "rmsprop_step",
            lhs: alloc::vec![grads.len()],
            rhs: alloc::vec![store.len()],
        });
    }
    for (slot, &id) in state.ids.clone().iter().enumerate() {
        let g = &grads[id];
        if g.shape() != store.value(id).shape() {
            return Err(Error::shape(
                "rmsprop_step gradient",
                g.shape(),
                store.value(id).shape(),
            ));
        }
        let acc_new: Vec<f64> = state.acc[slot]
            .data()
            .iter()
            .zip(g.data())
            .map(|(&a, &gi)| cfg.rho * a + (1.0 - cfg.rho) * gi * gi)
            .collect();
        let updated: Vec<f64> = store
            .value(id)
            .data()
            .iter()
            .zip(g.data().iter().zip(&acc_new))
            .map(|(&p, (&gi, &ai))| p - cfg.lr * gi / (math::sqrt(ai) + cfg.eps))
            .collect();
        state.acc[slot] = Tensor::new(g.shape().to_vec(), acc_new)?;
        store.set_value(id, Tensor::new(g.shape().to_vec(), updated)?);
    }
    Ok(())
}

/// Saturate every value of the listed parameters to `[-c, c]`. Values
/// already inside the interval are left bit-identical, so the map is
/// idempotent.
pub fn clip_parameters(store: &mut ParamStore, ids: &[ParamId], c: f64) -> Result<()> {
    if c <= 0.0 {
        return Err(Error::Config(alloc::format!(
            "clip range must be positive, got {c}"
        )));
    }
    for &id in ids {
        let cur = store.value(id);
        if cur.data().iter().any(|&v| v > c || v < -c) {
            let clipped = cur.map(|v| v.clamp(-c, c));
            store.set_value(id, clipped);
        }
    }
    Ok(())
}
