//! Named parameter storage with deterministic iteration order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Map from parameter name to tensor. Iteration is lexicographic by name,
/// and a tensor's shape is fixed once inserted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter {name:?}")));
        }
        self.entries.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    /// Replaces the values of an existing parameter; the shape must match.
    pub fn update(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::dim(format!(
                "parameter {name:?} has shape {:?}, update has {:?}",
                slot.shape(),
                tensor.shape()
            )));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }
}

/// Parameter leaves bound onto a tape for one forward pass.
pub struct BoundParams {
    entries: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter {name:?} not bound")))
    }

    /// Collects the adjoint of every bound parameter by name.
    pub fn named_grads(&self, grads: &crate::tape::Gradients) -> BTreeMap<String, Tensor> {
        self.entries
            .iter()
            .map(|(name, &id)| (name.clone(), grads.get(id).clone()))
            .collect()
    }
}

impl Tape {
    /// Copies every parameter onto the tape as a leaf, in name order.
    pub fn bind_params(&mut self, params: &ParamStore) -> BoundParams {
        let mut entries = BTreeMap::new();
        for (name, tensor) in params.iter() {
            let id = self.leaf(tensor.clone());
            entries.insert(name.clone(), id);
        }
        BoundParams { entries }
    }
}
