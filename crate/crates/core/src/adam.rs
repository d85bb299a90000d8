//! Adam with bias correction. One state slot per parameter, keyed by name.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> AdamHyper {
        AdamHyper { lr, ..AdamHyper::default() }
    }
}

impl Default for AdamHyper {
    fn default() -> AdamHyper {
        AdamHyper { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One optimizer step over every gradient entry. Parameters without a
/// gradient entry are left untouched; a non-finite gradient aborts with the
/// offending parameter named.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(hyper.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(hyper.beta2, t as f64);
    for (name, grad) in grads {
        let tensor = params.get(name)?;
        if grad.shape() != tensor.shape() {
            return Err(Error::dim(format!(
                "gradient for {name:?} has shape {:?}, parameter has {:?}",
                grad.shape(),
                tensor.shape()
            )));
        }
        grad.check_finite()
            .map_err(|_| Error::Numeric(format!("non-finite gradient for parameter {name:?}")))?;
        let n = tensor.numel();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let mut updated = tensor.clone();
        let data = updated.data_mut();
        for (i, &g) in grad.data().iter().enumerate() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            data[i] -= hyper.lr * mhat / (libm::sqrt(vhat) + hyper.eps);
        }
        params.update(name, updated)?;
    }
    Ok(())
}
