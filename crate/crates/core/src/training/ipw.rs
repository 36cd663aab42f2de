use super::examples::Example;
use super::loss::TrainConfig;
use super::trainer::{train, TrainOutcome, Validation};
use crate::click::ImpressionRecord;
use crate::error::{Error, Result};
use crate::model::{init_params, ModelConfig, Variant};
use crate::scalar::Scalar;

/// Smallest admissible examination propensity.
pub const PROPENSITY_FLOOR: f64 = 1e-3;

fn check_propensity(p: Option<f64>, what: &str) -> Result<f64> {
    match p {
        Some(p) if p > PROPENSITY_FLOOR && p <= 1.0 => Ok(p),
        Some(p) => Err(Error::Domain(format!(
            "{what}: propensity {p} not in ({PROPENSITY_FLOOR}, 1]"
        ))),
        None => Err(Error::Domain(format!("{what}: missing propensity"))),
    }
}

/// `sum Delta(f(x), c) / P(O = 1 | x)` over the impressions.
pub fn ipw_risk(
    records: &[ImpressionRecord],
    scorer: impl Fn(&[f64]) -> f64,
    loss: impl Fn(f64, bool) -> f64,
) -> Result<f64> {
    let mut risk = 0.0;
    for r in records {
        let p = check_propensity(r.propensity, &format!("query {} position {}", r.query_id, r.position))?;
        risk += loss(scorer(&r.features), r.clicked) / p;
    }
    Ok(risk)
}

/// Replaces click counts by their propensity-weighted versions `k / p`, so
/// the weighted cross-entropy targets relevance in expectation.
pub fn ipw_examples(examples: &[Example]) -> Result<Vec<Example>> {
    examples
        .iter()
        .map(|e| {
            let p = check_propensity(e.propensity, &format!("query {} position {}", e.query_id, e.position))?;
            Ok(Example {
                clicks: e.clicks / p,
                ..e.clone()
            })
        })
        .collect()
}

/// Single-head model trained on inverse-propensity-weighted clicks with the
/// simulator's true examination probabilities.
pub fn train_ipw<T: Scalar>(
    model: &ModelConfig,
    examples: &[Example],
    val: &Validation,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    if model.variant != Variant::Single {
        return Err(Error::Config("IPW trainer needs a single-head model".into()));
    }
    let weighted = ipw_examples(examples)?;
    let val_weighted = ipw_examples(val.examples)?;
    let val = Validation {
        examples: &val_weighted,
        dataset: val.dataset,
    };
    train(init_params(model, config.seed)?, &weighted, &val, config)
}
