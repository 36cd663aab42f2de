//! Attention estimator with separate observation and relevance heads.

mod checkpoint;
mod forward;
mod params;
mod tensor;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, schema_hash, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use forward::{attention_encode, backward, embed_features, forward, EncoderTrace, ForwardTrace, Head, MlpTrace};
pub use params::{init_params, Dense, GradientSet, Mlp, ModelConfig, ModelParams, Variant};
pub use tensor::{add_outer, dot, matvec, matvec_t, Tensor};

use crate::click::build_feature_vector;
use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::eval::order_by_score;
use crate::info::PointwiseHeads;
use crate::scalar::Scalar;

fn token(o: u8) -> Result<u8> {
    if o > 1 {
        return Err(Error::Domain(format!("observation value {o} not in {{0, 1}}")));
    }
    Ok(o)
}

/// `P(O = 1 | x)`.
pub fn predict_observation<T: Scalar>(params: &ModelParams<T>, x: &[f64]) -> Result<T> {
    Ok(forward(params, x, Head::Observation, None)?.prob)
}

/// `P(R = 1 | O = o, x)`.
pub fn predict_relevance<T: Scalar>(params: &ModelParams<T>, x: &[f64], o: u8) -> Result<T> {
    Ok(forward(params, x, Head::Relevance, Some(token(o)?))?.prob)
}

/// Hard observation label: 1 iff `P(O = 1 | x) > 0.5`.
pub fn observation_label<T: Scalar>(p_o1: T) -> u8 {
    u8::from(p_o1 > T::lit(0.5))
}

pub fn estimate_observation_label<T: Scalar>(params: &ModelParams<T>, x: &[f64]) -> Result<u8> {
    Ok(observation_label(predict_observation(params, x)?))
}

/// `P(C = 1 | x) = P(R = 1 | O = o, x) P(O = 1 | x)`.
pub fn predict_click<T: Scalar>(params: &ModelParams<T>, x: &[f64], o: u8) -> Result<T> {
    Ok(predict_relevance(params, x, o)? * predict_observation(params, x)?)
}

/// The three head outputs at `x`.
pub fn heads<T: Scalar>(params: &ModelParams<T>, x: &[f64]) -> Result<PointwiseHeads<T>> {
    Ok(PointwiseHeads::new(
        predict_relevance(params, x, 1)?,
        predict_relevance(params, x, 0)?,
        predict_observation(params, x)?,
    ))
}

/// `P(R = 1 | x) = sum_o P(R = 1 | o, x) P(o | x)`. Single-head models
/// return their only output.
pub fn marginal_relevance<T: Scalar>(params: &ModelParams<T>, x: &[f64]) -> Result<T> {
    match params.config.variant {
        Variant::Factorized => Ok(heads(params, x)?.marginal_relevance()),
        Variant::Single => Ok(forward(params, x, Head::Relevance, None)?.prob),
    }
}

/// Relevance score of every document of `group`, each placed at the
/// configured inference position.
pub fn score_group<T: Scalar>(params: &ModelParams<T>, group: &QueryGroup) -> Result<Vec<T>> {
    let max_rank = match params.config.slots.last() {
        Some(crate::data::FeatureKind::Categorical { vocab }) => *vocab,
        _ => return Err(Error::Schema("last model slot must be the categorical position".into())),
    };
    group
        .documents
        .iter()
        .map(|doc| {
            let x = build_feature_vector(&group.user_features, doc, params.config.inference_position, max_rank)?;
            marginal_relevance(params, &x)
        })
        .collect()
}

/// Indices of `group.documents` by descending marginal relevance, ties by
/// ascending doc id.
pub fn rank_by_relevance<T: Scalar>(params: &ModelParams<T>, group: &QueryGroup) -> Result<Vec<usize>> {
    let scores = score_group(params, group)?;
    Ok(order_by_score(&scores, &group.documents))
}

#[cfg(test)]
mod tests;
