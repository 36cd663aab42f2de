use serde::{Deserialize, Serialize};

use super::examples::Example;
use crate::error::{Error, Result};
use crate::info::{cmi_pointwise_with_grad, PointwiseHeads, PROB_CLAMP};
use crate::model::{backward, forward, observation_label, GradientSet, Head, ModelParams, Variant};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the conditional mutual information term.
    pub eta: f64,
    pub l2_weight: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Smallest validation loss decrease counted as an improvement.
    pub min_delta: f64,
    pub seed: u64,
    /// Fit the observation head to logged observations and use them in
    /// place of the thresholded estimate.
    pub observation_supervision: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            eta: 0.5,
            l2_weight: 0.01,
            max_epochs: 100,
            patience: 5,
            min_delta: 1e-5,
            seed: 0,
            observation_supervision: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eta must be >= 0".into()));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(Error::Config("l2_weight must be >= 0".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("min_delta must be >= 0".into()));
        }
        Ok(())
    }
}

/// `-[c ln p + (1 - c) ln(1 - p)]` with `p` clamped to `[1e-6, 1 - 1e-6]`.
pub fn bce_loss<T: Scalar>(pred: T, label: bool) -> T {
    let (pos, neg) = if label {
        (T::one(), T::zero())
    } else {
        (T::zero(), T::one())
    };
    weighted_bce(pred, pos, neg).0
}

/// `-(pos ln p + neg ln(1 - p))` and its derivative in `p`; zero derivative
/// where the clamp is active.
fn weighted_bce<T: Scalar>(p: T, pos: T, neg: T) -> (T, T) {
    let lo = T::lit(PROB_CLAMP);
    let hi = T::one() - lo;
    let pc = p.clamp_to(lo, hi);
    let mut value = T::zero();
    let mut grad = T::zero();
    if pos != T::zero() {
        value = value - pos * pc.ln();
        grad = grad - pos / pc;
    }
    if neg != T::zero() {
        value = value - neg * (T::one() - pc).ln();
        grad = grad + neg / (T::one() - pc);
    }
    if pc != p {
        grad = T::zero();
    }
    (value, grad)
}

/// Components of the training objective `L + eta I + L2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts<T> {
    pub l: T,
    pub i: T,
    pub l2: T,
    pub total: T,
}

struct Passes<T> {
    obs: Option<(crate::model::ForwardTrace<T>, T)>,
    rel: [Option<crate::model::ForwardTrace<T>>; 2],
}

/// Objective over a batch and, when `with_grad`, its exact gradient.
///
/// Clicks are predicted as `P(R | O = o, x) P(O | x)`; `o` is the logged
/// observation under observation supervision and otherwise the thresholded
/// estimate, which is held constant when differentiating.
pub fn loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[Example],
    config: &TrainConfig,
    with_grad: bool,
) -> Result<(LossParts<T>, Option<GradientSet<T>>)> {
    let weight: f64 = batch.iter().map(|e| e.count).sum();
    if batch.is_empty() || weight <= 0.0 {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    let inv_w = T::lit(1.0 / weight);
    let eta = T::lit(config.eta);
    let factorized = params.config.variant == Variant::Factorized;
    let mut grads = with_grad.then(|| params.zeros_like());
    let mut l = T::zero();
    let mut i_sum = T::zero();

    for e in batch {
        let x = &e.features;
        let n = T::lit(e.count);
        let k = T::lit(e.clicks);
        let passes = if factorized {
            let obs = forward(params, x, Head::Observation, None)?;
            let q = obs.prob;
            Passes {
                obs: Some((obs, q)),
                rel: [
                    Some(forward(params, x, Head::Relevance, Some(0))?),
                    Some(forward(params, x, Head::Relevance, Some(1))?),
                ],
            }
        } else {
            Passes {
                obs: None,
                rel: [Some(forward(params, x, Head::Relevance, None)?), None],
            }
        };

        // d(unnormalized loss)/d(prob) per pass: [obs, rel o=0, rel o=1]
        let mut d = [T::zero(); 3];
        match &passes.obs {
            None => {
                let p = passes.rel[0].as_ref().expect("single pass").prob;
                let (v, g) = weighted_bce(p, k, n - k);
                l = l + v;
                d[1] = g;
            }
            Some((_, q)) => {
                let q = *q;
                let r = [
                    passes.rel[0].as_ref().unwrap().prob,
                    passes.rel[1].as_ref().unwrap().prob,
                ];
                if config.observation_supervision {
                    let n1 = T::lit(e.observed);
                    let n0 = n - n1;
                    let (v1, g1) = weighted_bce(r[1] * q, k, n1 - k);
                    let (v0, g0) = weighted_bce(r[0] * q, T::zero(), n0);
                    let (vo, go) = weighted_bce(q, n1, n0);
                    l = l + v1 + v0 + vo;
                    d[2] = d[2] + g1 * q;
                    d[1] = d[1] + g0 * q;
                    d[0] = d[0] + g1 * r[1] + g0 * r[0] + go;
                } else {
                    let o = observation_label(q) as usize;
                    let (v, g) = weighted_bce(r[o] * q, k, n - k);
                    l = l + v;
                    d[1 + o] = d[1 + o] + g * q;
                    d[0] = d[0] + g * r[o];
                }
                let (cmi, cg) = cmi_pointwise_with_grad(PointwiseHeads::new(r[1], r[0], q));
                i_sum = i_sum + n * cmi;
                d[2] = d[2] + eta * n * cg[0];
                d[1] = d[1] + eta * n * cg[1];
                d[0] = d[0] + eta * n * cg[2];
            }
        }

        if let Some(g) = grads.as_mut() {
            if let Some((tr, _)) = &passes.obs {
                if d[0] != T::zero() {
                    backward(params, x, tr, d[0] * inv_w, g);
                }
            }
            for (slot, tr) in passes.rel.iter().enumerate() {
                if let Some(tr) = tr {
                    if d[1 + slot] != T::zero() {
                        backward(params, x, tr, d[1 + slot] * inv_w, g);
                    }
                }
            }
        }
    }

    let l = l * inv_w;
    let i = i_sum * inv_w;
    let l2w = T::lit(config.l2_weight);
    let l2 = l2w * params.sum_squares();
    if let Some(g) = grads.as_mut() {
        let two = l2w + l2w;
        g.zip_mut(params, |_, gt, pt| {
            for (a, &b) in gt.data.iter_mut().zip(&pt.data) {
                *a = *a + two * b;
            }
        })?;
        if let Some(name) = g.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let total = l + eta * i + l2;
    if !total.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((LossParts { l, i, l2, total }, grads))
}

pub fn total_loss<T: Scalar>(params: &ModelParams<T>, batch: &[Example], config: &TrainConfig) -> Result<LossParts<T>> {
    Ok(loss_and_grad(params, batch, config, false)?.0)
}

pub fn grad<T: Scalar>(params: &ModelParams<T>, batch: &[Example], config: &TrainConfig) -> Result<GradientSet<T>> {
    Ok(loss_and_grad(params, batch, config, true)?
        .1
        .expect("gradient requested"))
}
