//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use inforank::data::{write_sparse_text, Dataset};
use inforank::eval::{
    bias_sweep, eta_sweep, fraction_sweep, frequency_curve, initial_rankings, label_rankings, model_rankings,
    position_shift_analysis, Curve, MetricsReport, ReportSummary, SweepTable, NDCG_CUTOFFS,
};
use inforank::model::{load_checkpoint, save_checkpoint};
use inforank::oracle::{oracle_suite, SuiteSizes};
use inforank::pipeline::{evaluate_run, prepare_from_dataset, run_trainer, TrainerKind};
use inforank::{Error, Result};

use crate::artifacts::{
    checkpoint_name, load_prepared, log_file, parse_checkpoint_name, split_file, OutDir, CHECKPOINT_SUFFIX, RANKER_FILE,
};
use crate::config::ExperimentConfig;

/// Settings shared by every subcommand.
pub struct Common {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub force: bool,
}

pub fn generate(c: &Common) -> Result<()> {
    let seed = c.config.seeds[0];
    let ds = c.config.load_dataset(seed)?;
    let mut out = OutDir::create(&c.out, c.force)?;
    ds.save_cache(&out.file("dataset.json"))?;
    out.write("dataset.txt", write_sparse_text(&ds))?;
    out.finish("generate", &c.config, None, None, Vec::new())
}

fn dataset_input(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("dataset.json")
    } else {
        path.to_path_buf()
    }
}

pub fn simulate(c: &Common, dataset: Option<&Path>) -> Result<()> {
    let seed = c.config.seeds[0];
    let ds = match dataset {
        Some(p) => Dataset::load_cache(&dataset_input(p))?,
        None => c.config.load_dataset(seed)?,
    };
    let prepared = prepare_from_dataset(&ds, &c.config.run_config(), seed)?;
    let mut out = OutDir::create(&c.out, c.force)?;
    for (name, part, log) in [
        ("train", &prepared.train, &prepared.train_log),
        ("validation", &prepared.validation, &prepared.validation_log),
        ("test", &prepared.test, &prepared.test_log),
    ] {
        part.save_cache(&out.file(&split_file(name)))?;
        log.save(&out.file(&log_file(name)))?;
    }
    out.write_json(RANKER_FILE, &prepared.ranker)?;
    let inputs = dataset.map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    out.finish("simulate", &c.config, None, None, inputs)
}

/// Trainers requested on the command line or in the config.
fn trainers(c: &Common, only: Option<TrainerKind>) -> Vec<TrainerKind> {
    only.map(|t| vec![t]).unwrap_or_else(|| c.config.trainers.clone())
}

/// Runs every trainer for every seed; a diverged run keeps its history and
/// the remaining runs still execute.
pub fn train(c: &Common, logs: &Path, only: Option<TrainerKind>, eta: Option<f64>) -> Result<()> {
    let prepared = load_prepared(logs)?;
    let mut run = c.config.run_config();
    if let Some(e) = eta {
        run.training.eta = e;
        run.training.validate()?;
    }
    let mut out = OutDir::create(&c.out, c.force)?;
    let mut failure = None;
    for &seed in &c.config.seeds {
        for t in trainers(c, only) {
            let name = checkpoint_name(t, seed);
            let outcome = run_trainer(t, &prepared, &run, seed)?;
            out.write(&format!("{name}.history.csv"), outcome.history.to_csv())?;
            match &outcome.history.diverged {
                Some(msg) => {
                    eprintln!("{name}: training diverged: {msg}");
                    failure.get_or_insert_with(|| Error::NonFinite(format!("{name}: {msg}")));
                }
                None => {
                    save_checkpoint(&outcome.params, &out.file(&format!("{name}{CHECKPOINT_SUFFIX}")))?;
                    let best = outcome.history.best_epoch;
                    eprintln!("{name}: best epoch {best} of {}", outcome.history.epochs.len() - 1);
                }
            }
        }
    }
    out.finish("train", &c.config, only, eta, vec![logs.to_path_buf()])?;
    failure.map_or(Ok(()), Err)
}

fn list_checkpoints(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut found: Vec<(String, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(CHECKPOINT_SUFFIX).map(|s| (s.to_string(), e.path()))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::Empty(format!("no checkpoints in {}", dir.display())));
    }
    Ok(found)
}

fn per_query_csv(r: &MetricsReport) -> String {
    let mut s = String::from("query_id,ndcg3,ndcg5,ndcg10,ap10\n");
    for q in &r.per_query {
        let n = q.ndcg.map(|n| n.map(|v| v.to_string())).unwrap_or_default();
        let ap = q.ap_at_10.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", q.query_id, n[0], n[1], n[2], ap);
    }
    s
}

fn summary_csv(rows: &[(TrainerKind, ReportSummary)]) -> String {
    let mut s = String::from("trainer,n_seeds");
    for k in NDCG_CUTOFFS {
        let _ = write!(s, ",ndcg{k},ndcg{k}_stderr");
    }
    s.push_str(",map10,map10_stderr,delta_ci,delta_ci_stderr\n");
    for (t, r) in rows {
        let _ = write!(s, "{},{}", t.name(), r.n_seeds);
        for k in NDCG_CUTOFFS {
            let (m, se) = r.ndcg[&k];
            let _ = write!(s, ",{m},{se}");
        }
        let (dm, dse) = r
            .delta_ci
            .map(|(m, se)| (m.to_string(), se.to_string()))
            .unwrap_or_default();
        let _ = writeln!(s, ",{},{},{dm},{dse}", r.map_at_10.0, r.map_at_10.1);
    }
    s
}

fn write_frequency(out: &mut OutDir, prefix: &str, rankings: &[Vec<u64>], c: &Common) -> Result<()> {
    match frequency_curve(rankings, c.config.eval.frequency_buckets, c.config.eval.top_k) {
        Ok(f) => {
            out.write(&format!("{prefix}.frequency.csv"), f.position.to_csv())?;
            out.write(&format!("{prefix}.top_share.csv"), f.top_share.to_csv())
        }
        Err(Error::Domain(msg)) => {
            eprintln!("{prefix}: frequency curve skipped: {msg}");
            Ok(())
        }
        Err(e) => Err(e),
    }
}

pub fn evaluate(c: &Common, logs: &Path, checkpoints: &Path) -> Result<()> {
    let prepared = load_prepared(logs)?;
    let expected = prepared.test_log.slots();
    let found = list_checkpoints(checkpoints)?;
    let mut out = OutDir::create(&c.out, c.force)?;
    let initial = initial_rankings(&prepared.ranker, &prepared.test);
    let by_label = label_rankings(&prepared.test);
    write_frequency(&mut out, "labels", &by_label, c)?;
    write_frequency(&mut out, "initial", &initial, c)?;
    let mut reference: Option<Curve> = None;
    let mut grouped: Vec<(TrainerKind, Vec<MetricsReport>)> = Vec::new();
    for (stem, path) in &found {
        let (trainer, seed) = parse_checkpoint_name(stem)
            .ok_or_else(|| Error::Config(format!("checkpoint name {stem:?} is not <trainer>-seed<n>")))?;
        let params = load_checkpoint::<f64>(path, &expected)?;
        let mut report = evaluate_run(&params, &prepared, seed)?;
        report.config_hash = Some(c.config.hash());
        out.write_json(&format!("{stem}.report.json"), &report)?;
        out.write(&format!("{stem}.per_query.csv"), per_query_csv(&report))?;
        let ranked = model_rankings(&params, &prepared.test)?;
        let (shift, labels) = position_shift_analysis(&initial, &ranked, &by_label)?;
        out.write(&format!("{stem}.position_shift.csv"), shift.to_csv())?;
        reference.get_or_insert(labels);
        write_frequency(&mut out, stem, &ranked, c)?;
        match grouped.iter_mut().find(|(t, _)| *t == trainer) {
            Some((_, v)) => v.push(report),
            None => grouped.push((trainer, vec![report])),
        }
    }
    if let Some(r) = reference {
        out.write("labels.position_shift.csv", r.to_csv())?;
    }
    grouped.sort_by_key(|(t, _)| *t);
    let rows = grouped
        .iter()
        .map(|(t, v)| Ok((*t, ReportSummary::from_reports(v)?)))
        .collect::<Result<Vec<_>>>()?;
    out.write("summary.csv", summary_csv(&rows))?;
    out.finish(
        "evaluate",
        &c.config,
        None,
        None,
        vec![logs.to_path_buf(), checkpoints.to_path_buf()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepChoice {
    Bias,
    Eta,
    Fraction,
    All,
}

pub fn sweep(c: &Common, which: SweepChoice, only: Option<TrainerKind>) -> Result<()> {
    let run = c.config.run_config();
    let seeds = &c.config.seeds;
    let ts = trainers(c, only);
    let e = &c.config.eval;
    let mut out = OutDir::create(&c.out, c.force)?;
    let mut emit = |name: &str, t: SweepTable| -> Result<()> {
        out.write(&format!("{name}_cells.csv"), t.to_csv())?;
        out.write(&format!("{name}_summary.csv"), t.summary_csv())
    };
    if matches!(which, SweepChoice::Bias | SweepChoice::All) {
        emit("bias", bias_sweep(&run, &e.bias_degrees, &ts, seeds)?)?;
    }
    if matches!(which, SweepChoice::Eta | SweepChoice::All) {
        emit("eta", eta_sweep(&run, &e.etas, seeds)?)?;
    }
    if matches!(which, SweepChoice::Fraction | SweepChoice::All) {
        emit("fraction", fraction_sweep(&run, &e.fractions, &ts, seeds)?)?;
    }
    out.finish("sweep", &c.config, only, None, Vec::new())
}

pub fn oracle_check(c: &Common) -> Result<()> {
    let checks = oracle_suite(c.config.seeds[0], SuiteSizes::default())?;
    for ch in &checks {
        println!(
            "{} {} cases={} failures={} worst={:e}",
            if ch.pass { "PASS" } else { "FAIL" },
            ch.identity,
            ch.cases,
            ch.failures,
            ch.worst
        );
    }
    let mut out = OutDir::create(&c.out, c.force)?;
    out.write_json("oracle_report.json", &checks)?;
    out.finish("oracle-check", &c.config, None, None, Vec::new())
}
