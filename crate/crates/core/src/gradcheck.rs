//! Central-difference verification of tape gradients.

use alloc::format;

use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::tape::{NodeId, Tape};

/// Compares analytic gradients against central finite differences for every
/// scalar in `params` and returns the worst relative error, with the
/// denominator floored at one so tiny gradients do not explode the ratio.
///
/// `build` must construct the full forward pass onto the fresh tape and
/// return its scalar output node; it runs once per perturbed evaluation, so
/// anything random inside it must be seeded identically across calls.
pub fn grad_check<F>(build: F, params: &ParamStore, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<NodeId>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }

    let eval = |p: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind_params(p);
        let out = build(&mut tape, &bound)?;
        if tape.value(out).numel() != 1 {
            return Err(Error::Contract(format!(
                "grad_check expects a scalar output, got shape {:?}",
                tape.value(out).shape()
            )));
        }
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite evaluation {v}")));
        }
        Ok(v)
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let bound = tape.bind_params(params);
    let out = build(&mut tape, &bound)?;
    let grads = tape.backward(out)?;
    let analytic = bound.named_grads(&grads);

    // Finite differences on a scratch copy, one scalar at a time.
    let mut scratch = params.clone();
    let mut worst = 0.0f64;
    let names: alloc::vec::Vec<_> = params.names().cloned().collect();
    for name in &names {
        let n = params.get(name)?.numel();
        for i in 0..n {
            let original = scratch.get(name)?.data()[i];

            set_value(&mut scratch, name, i, original + step)?;
            let up = eval(&scratch)?;
            set_value(&mut scratch, name, i, original - step)?;
            let down = eval(&scratch)?;
            set_value(&mut scratch, name, i, original)?;

            let fd = (up - down) / (2.0 * step);
            let an = analytic[name].data()[i];
            let denom = libm::fabs(fd).max(1.0);
            let rel = libm::fabs(an - fd) / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn set_value(params: &mut ParamStore, name: &str, index: usize, value: f64) -> Result<()> {
    params.get_mut(name)?.data_mut()[index] = value;
    Ok(())
}
