//! Grids over bias degree, regularizer weight and training-set size.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::mean_and_stderr;
use crate::data::generate_synthetic;
use crate::error::{Error, Result};
use crate::pipeline::{
    derive_seed, evaluate_run, prepare_from_dataset, run_trainer, subsample_training, Prepared, RunConfig, TrainerKind,
    STAGE_DATA,
};
use crate::training::delta_ci_examples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Click-model bias degree.
    Bias,
    /// Regularizer weight of the factorized model.
    Eta,
    /// Share of training queries kept.
    Fraction,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Bias => "bias",
            SweepKind::Eta => "eta",
            SweepKind::Fraction => "fraction",
        }
    }
}

/// One trained and evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub kind: SweepKind,
    pub value: f64,
    pub trainer: TrainerKind,
    pub seed: u64,
    pub ndcg10: f64,
    pub map10: f64,
    pub delta_ci: Option<f64>,
    pub val_delta_ci: Option<f64>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub kind: SweepKind,
    pub value: f64,
    pub trainer: TrainerKind,
    pub n_seeds: usize,
    pub ndcg10: (f64, f64),
    pub map10: (f64, f64),
    pub val_delta_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep,value,trainer,seed,ndcg10,map10,delta_ci,val_delta_ci,epochs\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                c.kind.name(),
                c.value,
                c.trainer.name(),
                c.seed,
                c.ndcg10,
                c.map10,
                opt(c.delta_ci),
                opt(c.val_delta_ci),
                c.epochs
            );
        }
        s
    }

    /// Seed-averaged rows in first-appearance order of `(kind, value, trainer)`.
    pub fn summary(&self) -> Vec<SweepSummaryRow> {
        let mut keys: Vec<(SweepKind, f64, TrainerKind)> = Vec::new();
        for c in &self.cells {
            let k = (c.kind, c.value, c.trainer);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(kind, value, trainer)| {
                let cells: Vec<&SweepCell> = self
                    .cells
                    .iter()
                    .filter(|c| c.kind == kind && c.value == value && c.trainer == trainer)
                    .collect();
                let ndcg: Vec<f64> = cells.iter().map(|c| c.ndcg10).collect();
                let map: Vec<f64> = cells.iter().map(|c| c.map10).collect();
                let dci: Option<Vec<f64>> = cells.iter().map(|c| c.val_delta_ci).collect();
                SweepSummaryRow {
                    kind,
                    value,
                    trainer,
                    n_seeds: cells.len(),
                    ndcg10: mean_and_stderr(&ndcg),
                    map10: mean_and_stderr(&map),
                    val_delta_ci: dci.map(|v| mean_and_stderr(&v)),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "sweep,value,trainer,n_seeds,ndcg10,ndcg10_stderr,map10,map10_stderr,val_delta_ci,val_delta_ci_stderr\n",
        );
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.kind.name(),
                r.value,
                r.trainer.name(),
                r.n_seeds,
                r.ndcg10.0,
                r.ndcg10.1,
                r.map10.0,
                r.map10.1,
                opt(r.val_delta_ci.map(|v| v.0)),
                opt(r.val_delta_ci.map(|v| v.1))
            );
        }
        s
    }

    /// Seed-mean NDCG@10 of one grid point.
    pub fn mean_ndcg(&self, value: f64, trainer: TrainerKind) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|r| r.value == value && r.trainer == trainer)
            .map(|r| r.ndcg10.0)
    }
}

/// Trains and evaluates one model.
pub fn run_cell(
    kind: SweepKind,
    value: f64,
    trainer: TrainerKind,
    prepared: &Prepared,
    config: &RunConfig,
    seed: u64,
) -> Result<SweepCell> {
    let outcome = run_trainer(trainer, prepared, config, seed)?;
    let epochs = outcome.history.epochs.len().saturating_sub(1);
    let params = outcome.finished()?.params;
    let report = evaluate_run(&params, prepared, seed)?;
    Ok(SweepCell {
        kind,
        value,
        trainer,
        seed,
        ndcg10: report.ndcg_at(10).unwrap_or(0.0),
        map10: report.map_at_10,
        delta_ci: report.delta_ci,
        val_delta_ci: delta_ci_examples(&params, &prepared.validation_examples)?,
        epochs,
    })
}

fn check_grid(name: &str, grid: &[f64], trainers: &[TrainerKind], seeds: &[u64]) -> Result<()> {
    if grid.is_empty() || trainers.is_empty() || seeds.is_empty() {
        return Err(Error::Config(format!("{name} sweep needs a grid, trainers and seeds")));
    }
    Ok(())
}

/// For each degree, regenerates the clicks of the seed's dataset and trains
/// every trainer.
pub fn bias_sweep(config: &RunConfig, degrees: &[f64], trainers: &[TrainerKind], seeds: &[u64]) -> Result<SweepTable> {
    check_grid("bias", degrees, trainers, seeds)?;
    config.validate()?;
    let mut table = SweepTable::default();
    for &seed in seeds {
        let dataset = generate_synthetic(&config.data, derive_seed(seed, STAGE_DATA))?;
        for &d in degrees {
            let mut cfg = config.clone();
            cfg.clicks.model = config.clicks.model.with_degree(d)?;
            let prepared = prepare_from_dataset(&dataset, &cfg, seed)?;
            for &t in trainers {
                table
                    .cells
                    .push(run_cell(SweepKind::Bias, d, t, &prepared, &cfg, seed)?);
            }
        }
    }
    Ok(table)
}

/// Factorized model over a grid of regularizer weights.
pub fn eta_sweep(config: &RunConfig, etas: &[f64], seeds: &[u64]) -> Result<SweepTable> {
    check_grid("eta", etas, &[TrainerKind::Inforank], seeds)?;
    config.validate()?;
    let mut table = SweepTable::default();
    for &seed in seeds {
        let dataset = generate_synthetic(&config.data, derive_seed(seed, STAGE_DATA))?;
        let prepared = prepare_from_dataset(&dataset, config, seed)?;
        for &eta in etas {
            let mut cfg = config.clone();
            cfg.training.eta = eta;
            cfg.training.validate()?;
            table.cells.push(run_cell(
                SweepKind::Eta,
                eta,
                TrainerKind::Inforank,
                &prepared,
                &cfg,
                seed,
            )?);
        }
    }
    Ok(table)
}

/// Trains on the first share of training queries for each fraction.
pub fn fraction_sweep(
    config: &RunConfig,
    fractions: &[f64],
    trainers: &[TrainerKind],
    seeds: &[u64],
) -> Result<SweepTable> {
    check_grid("fraction", fractions, trainers, seeds)?;
    config.validate()?;
    let mut table = SweepTable::default();
    for &seed in seeds {
        let dataset = generate_synthetic(&config.data, derive_seed(seed, STAGE_DATA))?;
        let full = prepare_from_dataset(&dataset, config, seed)?;
        for &f in fractions {
            let prepared = subsample_training(&full, f)?;
            for &t in trainers {
                table
                    .cells
                    .push(run_cell(SweepKind::Fraction, f, t, &prepared, config, seed)?);
            }
        }
    }
    Ok(table)
}
