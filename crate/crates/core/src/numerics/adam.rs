use super::params::ParameterSet;
use crate::error::{Error, Result};

/// Adam moments and hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: ParameterSet,
    second: ParameterSet,
}

impl AdamState {
    /// Zero moments shaped like `params`; β1=0.9, β2=0.999, ε=1e-8.
    pub fn new(params: &ParameterSet, lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParameterSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParameterSet {
        &self.first
    }

    pub fn second_moment(&self) -> &ParameterSet {
        &self.second
    }
}

/// One bias-corrected Adam update.
///
/// A tensor whose gradient is exactly zero everywhere received no signal and
/// is left untouched, moments included. Any other tensor gets the dense update.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut AdamState,
) -> Result<()> {
    params.check_aligned(grads)?;
    params.check_aligned(&state.first)?;
    for (name, g) in grads.iter() {
        if let Some(bad) = g.data().iter().find(|x| !x.is_finite()) {
            return Err(Error::Training {
                param: name.to_string(),
                reason: format!("non-finite gradient {bad}"),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    let iter = params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.first.iter_mut().zip(state.second.iter_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in iter {
        if g.data().iter().all(|&x| x == 0.0) {
            continue;
        }
        let p = p.data_mut();
        let m = m.data_mut();
        let v = v.data_mut();
        for (i, &gi) in g.data().iter().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
