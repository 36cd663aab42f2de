use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::examples::{labeled_examples, Example};
use super::loss::{loss_and_grad, total_loss, LossParts, TrainConfig};
use super::optim::{adam_step, OptimizerState};
use crate::data::{Dataset, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, order_by_score};
use crate::info::delta_ci_pointwise;
use crate::model::{heads, init_params, score_group, ModelConfig, ModelParams, Variant};
use crate::scalar::Scalar;

/// Held-out data for early stopping and per-epoch diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Validation<'a> {
    pub examples: &'a [Example],
    /// Graded lists for NDCG@10.
    pub dataset: Option<&'a Dataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l: f64,
    pub i: f64,
    pub l2: f64,
    pub total: f64,
    pub val_total: f64,
    pub val_ndcg10: Option<f64>,
    pub val_delta_ci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,L,I,L2,total,val_total,val_ndcg10,val_delta_ci\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.l,
                r.i,
                r.l2,
                r.total,
                r.val_total,
                opt(r.val_ndcg10),
                opt(r.val_delta_ci)
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best validation epoch.
    pub params: ModelParams<T>,
    pub history: History,
}

impl<T> TrainOutcome<T> {
    /// Turns a diverged run into an error.
    pub fn finished(self) -> Result<Self> {
        match &self.history.diverged {
            Some(msg) => Err(Error::NonFinite(msg.clone())),
            None => Ok(self),
        }
    }
}

/// Mean NDCG@10 of the model's ranking over `dataset`.
pub fn ndcg10<T: Scalar>(params: &ModelParams<T>, dataset: &Dataset) -> Result<Option<f64>> {
    let mut lists = Vec::with_capacity(dataset.groups.len());
    for g in &dataset.groups {
        let scores = score_group(params, g)?;
        let order = order_by_score(&scores, &g.documents);
        lists.push(order.iter().map(|&i| g.documents[i].graded_relevance).collect());
    }
    Ok(mean_ndcg::<f64>(&lists, 10))
}

/// Impression-weighted mean conditional-independence gap; `None` for
/// single-head models.
pub fn delta_ci_examples<T: Scalar>(params: &ModelParams<T>, examples: &[Example]) -> Result<Option<f64>> {
    if params.config.variant == Variant::Single {
        return Ok(None);
    }
    let weight: f64 = examples.iter().map(|e| e.count).sum();
    if examples.is_empty() || weight <= 0.0 {
        return Err(Error::Empty("delta CI over an empty set".into()));
    }
    let mut s = 0.0;
    for e in examples {
        s += e.count * delta_ci_pointwise(heads(params, &e.features)?).to_f64_lossy();
    }
    Ok(Some(s / weight))
}

fn to_f64<T: Scalar>(p: LossParts<T>) -> [f64; 4] {
    [p.l, p.i, p.l2, p.total].map(|v| v.to_f64_lossy())
}

fn validation_record<T: Scalar>(
    params: &ModelParams<T>,
    epoch: usize,
    train_parts: [f64; 4],
    train_examples: &[Example],
    val: &Validation,
    config: &TrainConfig,
) -> Result<EpochRecord> {
    let (val_total, val_delta_ci) = if val.examples.is_empty() {
        (train_parts[3], delta_ci_examples(params, train_examples)?)
    } else {
        (
            total_loss(params, val.examples, config)?.total.to_f64_lossy(),
            delta_ci_examples(params, val.examples)?,
        )
    };
    let val_ndcg10 = match val.dataset {
        Some(ds) => ndcg10(params, ds)?,
        None => None,
    };
    Ok(EpochRecord {
        epoch,
        l: train_parts[0],
        i: train_parts[1],
        l2: train_parts[2],
        total: train_parts[3],
        val_total,
        val_ndcg10,
        val_delta_ci,
    })
}

/// Minibatch Adam on `L + eta I + L2` with early stopping on the
/// validation objective.
///
/// Epoch 0 records the initial parameters. Each later epoch visits every
/// example once in an order reshuffled from the run seed.
pub fn train<T: Scalar>(
    init: ModelParams<T>,
    examples: &[Example],
    val: &Validation,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("no training examples".into()));
    }
    let mut params = init;
    let mut state = OptimizerState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = History::default();

    let initial = to_f64(total_loss(&params, examples, config)?);
    let first = validation_record(&params, 0, initial, examples, val, config)?;
    let mut best_loss = first.val_total;
    let mut best = params.clone();
    let mut since_best = 0;
    history.epochs.push(first);

    let mut batch = Vec::with_capacity(config.batch_size);
    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut seen = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i].clone()));
            let (parts, grads) = match loss_and_grad(&params, &batch, config, true) {
                Ok(r) => r,
                Err(e) if e.is_numerical() => {
                    history.diverged = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let w: f64 = batch.iter().map(|e| e.count).sum();
            for (s, v) in sums.iter_mut().zip(to_f64(parts)) {
                *s += w * v;
            }
            seen += w;
            adam_step(
                &mut params,
                &grads.expect("gradient requested"),
                &mut state,
                config.learning_rate,
            )?;
        }
        if let Some(name) = params.first_non_finite() {
            history.diverged = Some(format!("epoch {epoch}: non-finite parameter {name}"));
            break;
        }
        let parts = sums.map(|s| s / seen);
        let rec = match validation_record(&params, epoch, parts, examples, val, config) {
            Ok(r) => r,
            Err(e) if e.is_numerical() => {
                history.diverged = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let improved = rec.val_total < best_loss - config.min_delta;
        history.epochs.push(rec);
        if improved {
            best_loss = history.epochs.last().unwrap().val_total;
            best = params.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { params: best, history })
}

fn require_variant(config: &ModelConfig, variant: Variant) -> Result<()> {
    if config.variant != variant {
        return Err(Error::Config(format!("trainer needs a {variant:?} model")));
    }
    Ok(())
}

/// Factorized estimator trained on clicks with the CMI penalty.
pub fn train_inforank<T: Scalar>(
    model: &ModelConfig,
    examples: &[Example],
    val: &Validation,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    require_variant(model, Variant::Factorized)?;
    train(init_params(model, config.seed)?, examples, val, config)
}

/// Single-head model fit to raw clicks.
pub fn train_click_baseline<T: Scalar>(
    model: &ModelConfig,
    examples: &[Example],
    val: &Validation,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    require_variant(model, Variant::Single)?;
    train(init_params(model, config.seed)?, examples, val, config)
}

/// Single-head model fit to the relevance probabilities of the graded
/// labels (the expected loss over sampled binary labels).
pub fn train_labeled_upper_bound<T: Scalar>(
    model: &ModelConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    require_variant(model, Variant::Single)?;
    let max_rank = match model.slots.last() {
        Some(crate::data::FeatureKind::Categorical { vocab }) => *vocab,
        _ => return Err(Error::Schema("last model slot must be the categorical position".into())),
    };
    let pos = model.inference_position;
    let train_ex = labeled_examples(train_set, DEFAULT_EPSILON, pos, max_rank)?;
    let val_ex = match val_set {
        Some(v) => labeled_examples(v, DEFAULT_EPSILON, pos, max_rank)?,
        None => Vec::new(),
    };
    let val = Validation {
        examples: &val_ex,
        dataset: val_set,
    };
    train(init_params(model, config.seed)?, &train_ex, &val, config)
}
