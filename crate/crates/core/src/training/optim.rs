use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradientSet, ModelParams};
use crate::scalar::Scalar;

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OptimizerState<T> {
    pub m: GradientSet<T>,
    pub v: GradientSet<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &GradientSet<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    state.step += 1;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let one = T::one();
    let t = state.step as i32;
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let lr = T::lit(lr);
    let eps = T::lit(state.eps);
    state.m.zip_mut(grads, |_, m, g| {
        for (mi, &gi) in m.data.iter_mut().zip(&g.data) {
            *mi = b1 * *mi + (one - b1) * gi;
        }
    })?;
    state.v.zip_mut(grads, |_, v, g| {
        for (vi, &gi) in v.data.iter_mut().zip(&g.data) {
            *vi = b2 * *vi + (one - b2) * gi * gi;
        }
    })?;
    let mut shifts = state.m.clone();
    shifts.zip_mut(&state.v, |_, m, v| {
        for (mi, &vi) in m.data.iter_mut().zip(&v.data) {
            *mi = lr * (*mi / c1) / ((vi / c2).sqrt() + eps);
        }
    })?;
    params.zip_mut(&shifts, |_, p, s| {
        for (pi, &si) in p.data.iter_mut().zip(&s.data) {
            *pi = *pi - si;
        }
    })
}
