//! Named parameter storage shared by networks, optimizers and checkpoints.

use alloc::string::String;
use alloc::vec::Vec;

use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParamStore`].
pub type ParamId = usize;

/// One named tensor. Trainable parameters receive gradients and optimizer
/// updates; non-trainable entries are buffers (e.g. batch-norm running
/// statistics) that still travel with checkpoints.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Flat, append-only collection of parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let id = self.params.len();
        self.params.push(Param {
            name: name.into(),
            value,
            trainable,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id].trainable
    }

    /// Replace a parameter value; the new tensor must keep the shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(
            self.params[id].value.shape(),
            value.shape(),
            "parameter {} shape changed",
            self.params[id].name
        );
        self.params[id].value = value;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate()
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.params.len())
            .filter(|&i| self.params[i].trainable)
            .collect()
    }
}
