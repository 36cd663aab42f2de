//! End-to-end experiment: synthetic data, logged rankings, simulated
//! clicks, training and evaluation.

use serde::{Deserialize, Serialize};

use crate::click::{
    simulate_dataset, train_initial_ranker, ClickLog, ClickModel, InitialRanker, PbmParams, SimulationConfig,
};
use crate::data::{filter_dataset, split_by_query, Dataset, SynthConfig, DEFAULT_EPSILON, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::model::{ModelConfig, ModelParams, Variant};
use crate::training::{
    aggregate_impressions, train_click_baseline, train_inforank, train_ipw, train_labeled_upper_bound, Example,
    TrainConfig, TrainOutcome, Validation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    /// Factorized model with the configured `eta`.
    Inforank,
    /// Factorized model with `eta = 0`.
    InforankMinus,
    /// Single head on raw clicks.
    Click,
    /// Single head on graded labels.
    Labeled,
    /// Single head on clicks reweighted by the true propensities.
    Ipw,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 5] = [
        TrainerKind::Labeled,
        TrainerKind::Inforank,
        TrainerKind::InforankMinus,
        TrainerKind::Click,
        TrainerKind::Ipw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Inforank => "inforank",
            TrainerKind::InforankMinus => "inforank_minus",
            TrainerKind::Click => "click",
            TrainerKind::Labeled => "labeled",
            TrainerKind::Ipw => "ipw",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown trainer {name:?}")))
    }

    pub fn variant(self) -> Variant {
        match self {
            TrainerKind::Inforank | TrainerKind::InforankMinus => Variant::Factorized,
            _ => Variant::Single,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClickSection {
    pub model: ClickModel,
    pub sessions_per_query: usize,
    pub epsilon: f64,
    /// Share of training queries whose labels fit the logging ranker.
    pub label_fraction: f64,
    pub max_rank: usize,
}

impl Default for ClickSection {
    fn default() -> Self {
        Self {
            model: ClickModel::Pbm(PbmParams::with_len(DEFAULT_MAX_LEN)),
            sessions_per_query: 100,
            epsilon: DEFAULT_EPSILON,
            label_fraction: 0.01,
            max_rank: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    pub heads: usize,
    /// Hidden widths of the MLP heads; empty means `[2 dim, dim]`.
    pub hidden: Vec<usize>,
    pub temperature: f64,
    pub inference_position: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            dim: 8,
            heads: 2,
            hidden: Vec::new(),
            temperature: 1.0,
            inference_position: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub validation: f64,
    pub max_len: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.15,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

/// Everything one seeded run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: SynthConfig,
    pub split: SplitSection,
    pub clicks: ClickSection,
    pub model: ModelSection,
    pub training: TrainConfig,
}

/// L2 weight of the experiment defaults; `0.01` per summed squared
/// parameter flattens every model at this data scale.
pub const EXPERIMENT_L2_WEIGHT: f64 = 1e-4;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig::default(),
            split: SplitSection::default(),
            clicks: ClickSection::default(),
            model: ModelSection::default(),
            training: TrainConfig {
                l2_weight: EXPERIMENT_L2_WEIGHT,
                ..TrainConfig::default()
            },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.clicks.model.validate()?;
        self.training.validate()?;
        if self.clicks.sessions_per_query == 0 {
            return Err(Error::Config("sessions_per_query must be >= 1".into()));
        }
        if !(self.clicks.label_fraction > 0.0 && self.clicks.label_fraction <= 1.0) {
            return Err(Error::Config("label_fraction must lie in (0, 1]".into()));
        }
        self.model_config(TrainerKind::Inforank, &crate::data::FeatureSchema::item_only(vec![]))
            .validate()
    }

    /// Architecture for `kind`; single-head trainers do not see the position.
    pub fn model_config(&self, kind: TrainerKind, schema: &crate::data::FeatureSchema) -> ModelConfig {
        let slots = crate::click::combined_slots(schema, self.clicks.max_rank);
        let mut m = ModelConfig::new(slots, self.model.dim, self.model.heads);
        if !self.model.hidden.is_empty() {
            m.hidden = self.model.hidden.clone();
        }
        m.temperature = self.model.temperature;
        m.inference_position = self.model.inference_position;
        m.variant = kind.variant();
        m.use_position = kind.variant() == Variant::Factorized;
        m
    }
}

/// Independent sub-seed for stage `stage` of run `seed`.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const STAGE_DATA: u64 = 1;
pub const STAGE_SPLIT: u64 = 2;
pub const STAGE_RANKER: u64 = 3;
pub const STAGE_CLICKS: u64 = 4;
pub const STAGE_TRAIN: u64 = 5;

/// Data side of a run, shared by all trainers.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub ranker: InitialRanker,
    pub train_log: ClickLog,
    pub validation_log: ClickLog,
    pub test_log: ClickLog,
    pub train_examples: Vec<Example>,
    pub validation_examples: Vec<Example>,
    pub test_examples: Vec<Example>,
}

/// Simulates the click logs of `dataset` split by query.
pub fn prepare_from_dataset(dataset: &Dataset, config: &RunConfig, seed: u64) -> Result<Prepared> {
    let filtered = filter_dataset(dataset, config.split.max_len);
    if filtered.groups.is_empty() {
        return Err(Error::Empty("no query survives filtering".into()));
    }
    let split = split_by_query(
        &filtered,
        config.split.train,
        config.split.validation,
        derive_seed(seed, STAGE_SPLIT),
    )?;
    if split.train.groups.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    let ranker = train_initial_ranker(
        &split.train,
        config.clicks.label_fraction,
        derive_seed(seed, STAGE_RANKER),
    )?;
    let sim = SimulationConfig {
        model: config.clicks.model.clone(),
        sessions_per_query: config.clicks.sessions_per_query,
        epsilon: config.clicks.epsilon,
        max_rank: config.clicks.max_rank,
    };
    let click_seed = derive_seed(seed, STAGE_CLICKS);
    let train_log = simulate_dataset(&split.train, &ranker, &sim, click_seed)?;
    let validation_log = simulate_dataset(&split.validation, &ranker, &sim, click_seed)?;
    let test_log = simulate_dataset(&split.test, &ranker, &sim, click_seed)?;
    Ok(Prepared {
        train_examples: aggregate_impressions(&train_log.records)?,
        validation_examples: aggregate_impressions(&validation_log.records)?,
        test_examples: aggregate_impressions(&test_log.records)?,
        train: split.train,
        validation: split.validation,
        test: split.test,
        ranker,
        train_log,
        validation_log,
        test_log,
    })
}

pub fn prepare(config: &RunConfig, seed: u64) -> Result<Prepared> {
    config.validate()?;
    let dataset = crate::data::generate_synthetic(&config.data, derive_seed(seed, STAGE_DATA))?;
    prepare_from_dataset(&dataset, config, seed)
}

/// Keeps the first `ceil(fraction * n)` training queries and their examples.
pub fn subsample_training(prepared: &Prepared, fraction: f64) -> Result<Prepared> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("training fraction {fraction} outside (0, 1]")));
    }
    let n = prepared.train.groups.len();
    let keep = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let idx: Vec<usize> = (0..keep).collect();
    let train = prepared.train.select(&idx);
    let ids: std::collections::BTreeSet<u64> = train.groups.iter().map(|g| g.query_id).collect();
    let mut out = prepared.clone();
    out.train_examples.retain(|e| ids.contains(&e.query_id));
    out.train_log.records.retain(|r| ids.contains(&r.query_id));
    out.train = train;
    Ok(out)
}

/// Trains one model of kind `kind` on the prepared data.
pub fn run_trainer(kind: TrainerKind, prepared: &Prepared, config: &RunConfig, seed: u64) -> Result<TrainOutcome<f64>> {
    let model = config.model_config(kind, &prepared.train.schema);
    let mut tc = config.training.clone();
    tc.seed = derive_seed(seed, STAGE_TRAIN);
    let val = Validation {
        examples: &prepared.validation_examples,
        dataset: Some(&prepared.validation),
    };
    match kind {
        TrainerKind::Inforank => train_inforank(&model, &prepared.train_examples, &val, &tc),
        TrainerKind::InforankMinus => {
            tc.eta = 0.0;
            train_inforank(&model, &prepared.train_examples, &val, &tc)
        }
        TrainerKind::Click => train_click_baseline(&model, &prepared.train_examples, &val, &tc),
        TrainerKind::Labeled => train_labeled_upper_bound(&model, &prepared.train, Some(&prepared.validation), &tc),
        TrainerKind::Ipw => train_ipw(&model, &prepared.train_examples, &val, &tc),
    }
}

/// Test-split report of a trained model.
pub fn evaluate_run(params: &ModelParams<f64>, prepared: &Prepared, seed: u64) -> Result<MetricsReport> {
    MetricsReport::compute(params, &prepared.test, &prepared.test_examples, seed)
}
