use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{average_precision_at_k, mean, ndcg_at_k, order_by_score};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{score_group, ModelParams};
use crate::scalar::Scalar;
use crate::training::{delta_ci_examples, Example};

pub const NDCG_CUTOFFS: [usize; 3] = [3, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: u64,
    /// NDCG at 3, 5 and 10; absent for queries without a positive label.
    pub ndcg: Option<[f64; 3]>,
    pub ap_at_10: Option<f64>,
}

/// Ranking quality on labeled lists plus the conditional-independence gap
/// on logged impressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map_at_10: f64,
    /// Cutoff to mean NDCG.
    pub ndcg: BTreeMap<usize, f64>,
    /// Absent for single-head models.
    pub delta_ci: Option<f64>,
    /// Queries whose ideal DCG is zero are left out of the means.
    pub n_queries: usize,
    pub n_excluded: usize,
    pub per_query: Vec<QueryMetrics>,
    pub seed: u64,
    pub config_hash: Option<String>,
}

/// Graded labels of every group in the order `params` ranks them.
pub fn ranked_labels<T: Scalar>(params: &ModelParams<T>, dataset: &Dataset) -> Result<Vec<(u64, Vec<u32>)>> {
    dataset
        .groups
        .iter()
        .map(|g| {
            let scores = score_group(params, g)?;
            let order = order_by_score(&scores, &g.documents);
            Ok((
                g.query_id,
                order.iter().map(|&i| g.documents[i].graded_relevance).collect(),
            ))
        })
        .collect()
}

impl MetricsReport {
    /// Metrics from already ranked label lists.
    pub fn from_ranked(lists: &[(u64, Vec<u32>)], delta_ci: Option<f64>, seed: u64) -> Result<Self> {
        let per_query: Vec<QueryMetrics> = lists
            .iter()
            .map(|(qid, labels)| {
                let ndcg = ndcg_at_k::<f64>(labels, 3).map(|n3| {
                    [
                        n3,
                        ndcg_at_k(labels, 5).unwrap_or(0.0),
                        ndcg_at_k(labels, 10).unwrap_or(0.0),
                    ]
                });
                let binary: Vec<bool> = labels.iter().map(|&y| y > 0).collect();
                QueryMetrics {
                    query_id: *qid,
                    ndcg,
                    ap_at_10: average_precision_at_k(&binary, 10),
                }
            })
            .collect();
        let scored = per_query.iter().filter(|q| q.ndcg.is_some()).count();
        if scored == 0 {
            return Err(Error::Empty("no query with a positive label to evaluate".into()));
        }
        let ndcg = NDCG_CUTOFFS
            .iter()
            .enumerate()
            .map(|(j, &k)| (k, mean(per_query.iter().map(|q| q.ndcg.map(|n| n[j]))).unwrap_or(0.0)))
            .collect();
        Ok(Self {
            map_at_10: mean(per_query.iter().map(|q| q.ap_at_10)).unwrap_or(0.0),
            ndcg,
            delta_ci,
            n_queries: scored,
            n_excluded: per_query.len() - scored,
            per_query,
            seed,
            config_hash: None,
        })
    }

    pub fn compute<T: Scalar>(
        params: &ModelParams<T>,
        dataset: &Dataset,
        impressions: &[Example],
        seed: u64,
    ) -> Result<Self> {
        let lists = ranked_labels(params, dataset)?;
        let delta_ci = if impressions.is_empty() {
            None
        } else {
            delta_ci_examples(params, impressions)?
        };
        Self::from_ranked(&lists, delta_ci, seed)
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ndcg.get(&k).copied()
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Seed-averaged summary of several reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_seeds: usize,
    pub map_at_10: (f64, f64),
    pub ndcg: BTreeMap<usize, (f64, f64)>,
    pub delta_ci: Option<(f64, f64)>,
}

impl ReportSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Empty("no reports to summarize".into()));
        }
        let maps: Vec<f64> = reports.iter().map(|r| r.map_at_10).collect();
        let ndcg = NDCG_CUTOFFS
            .iter()
            .map(|&k| {
                let v: Vec<f64> = reports.iter().filter_map(|r| r.ndcg_at(k)).collect();
                (k, mean_and_stderr(&v))
            })
            .collect();
        let cis: Option<Vec<f64>> = reports.iter().map(|r| r.delta_ci).collect();
        Ok(Self {
            n_seeds: reports.len(),
            map_at_10: mean_and_stderr(&maps),
            ndcg,
            delta_ci: cis.map(|v| mean_and_stderr(&v)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_from_ranked_lists() {
        let lists = vec![(0, vec![0, 1]), (1, vec![2, 0, 1]), (2, vec![0, 0])];
        let r = MetricsReport::from_ranked(&lists, Some(0.2), 5).unwrap();
        assert_eq!(r.n_queries, 2);
        assert_eq!(r.n_excluded, 1);
        let q0 = 1.0 / 3f64.log2();
        let q1 = 3.5 / (3.0 + q0);
        assert!((r.ndcg_at(10).unwrap() - (q0 + q1) / 2.0).abs() < 1e-12);
        assert!((r.map_at_10 - (0.5 + (1.0 + 2.0 / 3.0) / 2.0) / 2.0).abs() < 1e-12);
        let per_query_mean = r.per_query.iter().filter_map(|q| q.ndcg.map(|n| n[2])).sum::<f64>() / 2.0;
        assert!((per_query_mean - r.ndcg_at(10).unwrap()).abs() < 1e-15);
        assert!(MetricsReport::from_ranked(&[(0, vec![0])], None, 0).is_err());
    }

    #[test]
    fn summary_statistics() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_and_stderr(&[4.0]), (4.0, 0.0));
    }
}
