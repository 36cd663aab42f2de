//! Conditional mutual information between relevance and observation given
//! the features, and the pointwise conditional-independence gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower/upper clamp applied to probabilities before any logarithm.
pub const PROB_CLAMP: f64 = 1e-6;

/// The three head outputs for a single feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseHeads<T> {
    /// `P(R = 1 | O = 1, x)`
    pub p_r_given_o1: T,
    /// `P(R = 1 | O = 0, x)`
    pub p_r_given_o0: T,
    /// `P(O = 1 | x)`
    pub p_o1: T,
}

impl<T: Scalar> PointwiseHeads<T> {
    pub fn new(p_r_given_o1: T, p_r_given_o0: T, p_o1: T) -> Self {
        Self {
            p_r_given_o1,
            p_r_given_o0,
            p_o1,
        }
    }

    pub fn clamped(self) -> Self {
        let lo = T::lit(PROB_CLAMP);
        let hi = T::one() - lo;
        Self {
            p_r_given_o1: self.p_r_given_o1.clamp_to(lo, hi),
            p_r_given_o0: self.p_r_given_o0.clamp_to(lo, hi),
            p_o1: self.p_o1.clamp_to(lo, hi),
        }
    }

    /// `P(R = 1 | x) = sum_o P(R = 1 | o, x) P(o | x)`.
    pub fn marginal_relevance(self) -> T {
        self.p_r_given_o1 * self.p_o1 + self.p_r_given_o0 * (T::one() - self.p_o1)
    }

    /// Same heads with the observation labels swapped.
    pub fn relabeled(self) -> Self {
        Self::new(self.p_r_given_o0, self.p_r_given_o1, T::one() - self.p_o1)
    }
}

/// Bernoulli KL divergence `KL(a || m)` in nats.
fn bernoulli_kl<T: Scalar>(a: T, m: T) -> T {
    let one = T::one();
    a * (a / m).ln() + (one - a) * ((one - a) / (one - m)).ln()
}

/// `I(R; O | X = x)` in nats, clipped at zero.
///
/// Written as `q KL(a || m) + (1 - q) KL(b || m)` with `a`, `b` the two
/// relevance conditionals, `q = P(O = 1 | x)` and `m` the marginal
/// relevance; this is the four-term sum over `(R, O)`.
pub fn cmi_pointwise<T: Scalar>(heads: PointwiseHeads<T>) -> T {
    cmi_pointwise_with_grad(heads).0
}

/// Value and gradient with respect to `(p_r_given_o1, p_r_given_o0, p_o1)`.
///
/// The marginal `m` is a stationary point of the sum (its partial
/// derivative vanishes), which leaves
/// `dI/da = q ln[a(1-m) / ((1-a)m)]`, `dI/db = (1-q) ln[b(1-m) / ((1-b)m)]`
/// and `dI/dq = KL(a || m) - KL(b || m)`. Clamped inputs and the clipped
/// region get zero gradient.
pub fn cmi_pointwise_with_grad<T: Scalar>(heads: PointwiseHeads<T>) -> (T, [T; 3]) {
    let c = heads.clamped();
    let (a, b, q) = (c.p_r_given_o1, c.p_r_given_o0, c.p_o1);
    let one = T::one();
    if a == b {
        return (T::zero(), [T::zero(); 3]);
    }
    let m = c.marginal_relevance();
    let kl_a = bernoulli_kl(a, m);
    let kl_b = bernoulli_kl(b, m);
    let value = q * kl_a + (one - q) * kl_b;
    if value <= T::zero() {
        return (T::zero(), [T::zero(); 3]);
    }
    let logit_ratio = |p: T| (p * (one - m) / ((one - p) * m)).ln();
    let live = |raw: T, clamped: T| if raw == clamped { one } else { T::zero() };
    let grad = [
        live(heads.p_r_given_o1, a) * q * logit_ratio(a),
        live(heads.p_r_given_o0, b) * (one - q) * logit_ratio(b),
        live(heads.p_o1, q) * (kl_a - kl_b),
    ];
    (value, grad)
}

/// Mean pointwise CMI over a batch.
pub fn cmi_batch<T: Scalar>(heads: &[PointwiseHeads<T>]) -> Result<T> {
    if heads.is_empty() {
        return Err(Error::Empty("CMI over an empty batch".into()));
    }
    let sum: T = heads.iter().map(|&h| cmi_pointwise(h)).sum();
    Ok(sum / T::lit(heads.len() as f64))
}

/// `|P(R = 1 | O = 1, x) - P(R = 1 | O = 0, x)|`.
pub fn delta_ci_pointwise<T: Scalar>(heads: PointwiseHeads<T>) -> T {
    (heads.p_r_given_o1 - heads.p_r_given_o0).abs()
}

/// Mean conditional-independence gap over a set of head triples.
pub fn delta_ci_mean<T: Scalar>(heads: &[PointwiseHeads<T>]) -> Result<T> {
    if heads.is_empty() {
        return Err(Error::Empty("delta CI over an empty set".into()));
    }
    let sum: T = heads.iter().map(|&h| delta_ci_pointwise(h)).sum();
    Ok(sum / T::lit(heads.len() as f64))
}
