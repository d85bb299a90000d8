//! Regression losses on a scalar prediction error, with closed-form
//! derivatives. All three are even, nonnegative, and zero only at zero
//! error; Huber equals half the squared error inside the delta band.

use alloc::format;

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Huber,
    Mse,
    LogCosh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Transition point of the Huber loss; ignored by the other kinds.
    pub delta: f64,
}

impl LossSpec {
    pub fn huber(delta: f64) -> LossSpec {
        LossSpec { kind: LossKind::Huber, delta }
    }

    pub fn mse() -> LossSpec {
        LossSpec { kind: LossKind::Mse, delta: 1.0 }
    }

    pub fn log_cosh() -> LossSpec {
        LossSpec { kind: LossKind::LogCosh, delta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::Huber && !(self.delta > 0.0) {
            return Err(Error::Config(format!("huber delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Loss value and its derivative with respect to the prediction.
pub fn loss_eval(spec: &LossSpec, predicted: f64, target: f64) -> (f64, f64) {
    let e = predicted - target;
    match spec.kind {
        LossKind::Huber => {
            let d = spec.delta;
            if libm::fabs(e) <= d {
                (0.5 * e * e, e)
            } else {
                let sign = if e > 0.0 { 1.0 } else { -1.0 };
                (d * (libm::fabs(e) - 0.5 * d), d * sign)
            }
        }
        LossKind::Mse => (e * e, 2.0 * e),
        LossKind::LogCosh => {
            let a = libm::fabs(e);
            let v = a - core::f64::consts::LN_2 + libm::log1p(libm::exp(-2.0 * a));
            (v, libm::tanh(e))
        }
    }
}

impl Tape {
    /// Appends the scalar training loss for a scalar prediction node against
    /// a constant target.
    pub fn loss(&mut self, pred: NodeId, spec: &LossSpec, target: f64) -> Result<NodeId> {
        spec.validate()?;
        let yhat = self.value(pred).data()[0];
        let (value, dgrad) = loss_eval(spec, yhat, target);
        self.push_loss(pred, value, dgrad)
    }
}
