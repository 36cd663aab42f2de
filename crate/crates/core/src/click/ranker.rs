//! Weak linear ranker used to produce the logged (initial) rankings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Document, FeatureKind, QueryGroup};
use crate::error::{Error, Result};

/// Expanded feature vector as (index, value) pairs.
type SparseRow = Vec<(usize, f64)>;

const ITERATIONS: usize = 300;
const LEARNING_RATE: f64 = 0.5;
const L2: f64 = 1e-3;

/// Linear scorer over the one-hot expanded item slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialRanker {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub layout: Vec<FeatureKind>,
}

fn expanded_len(layout: &[FeatureKind]) -> usize {
    layout
        .iter()
        .map(|k| match k {
            FeatureKind::Categorical { vocab } => *vocab,
            FeatureKind::Real => 1,
        })
        .sum()
}

/// Sparse expansion: (index, value) pairs.
fn expand(layout: &[FeatureKind], features: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(layout.len());
    let mut offset = 0;
    for (kind, &v) in layout.iter().zip(features) {
        match *kind {
            FeatureKind::Categorical { vocab } => {
                out.push((offset + v as usize, 1.0));
                offset += vocab;
            }
            FeatureKind::Real => {
                out.push((offset, v));
                offset += 1;
            }
        }
    }
    out
}

impl InitialRanker {
    pub fn score(&self, doc: &Document) -> f64 {
        self.bias
            + expand(&self.layout, &doc.features)
                .into_iter()
                .map(|(i, v)| self.weights[i] * v)
                .sum::<f64>()
    }
}

/// Fits a pairwise logistic scorer on `ceil(label_fraction * |groups|)`
/// randomly chosen training groups.
pub fn train_initial_ranker(dataset: &Dataset, label_fraction: f64, seed: u64) -> Result<InitialRanker> {
    if !(label_fraction > 0.0 && label_fraction <= 1.0) {
        return Err(Error::Config(format!("label_fraction {label_fraction} outside (0, 1]")));
    }
    let n = dataset.groups.len();
    let take = ((label_fraction * n as f64).ceil() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(take);
    idx.sort_unstable();

    let layout = dataset.schema.item.clone();
    let dim = expanded_len(&layout);
    // (preferred, other) expanded feature pairs
    let mut pairs: Vec<(SparseRow, SparseRow)> = Vec::new();
    for &gi in &idx {
        let docs = &dataset.groups[gi].documents;
        for a in docs {
            for b in docs {
                if a.graded_relevance > b.graded_relevance {
                    pairs.push((expand(&layout, &a.features), expand(&layout, &b.features)));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Config(format!(
            "the {take} sampled group(s) contain no pair with differing labels; increase label_fraction"
        )));
    }

    let mut w = vec![0.0; dim];
    let scale = 1.0 / pairs.len() as f64;
    let mut grad = vec![0.0; dim];
    for _ in 0..ITERATIONS {
        grad.iter_mut().zip(&w).for_each(|(g, wi)| *g = 2.0 * L2 * wi);
        for (hi, lo) in &pairs {
            let s_hi: f64 = hi.iter().map(|&(i, v)| w[i] * v).sum();
            let s_lo: f64 = lo.iter().map(|&(i, v)| w[i] * v).sum();
            // d/ds log(1 + exp(-(s_hi - s_lo)))
            let coef = -scale / (1.0 + (s_hi - s_lo).exp());
            for &(i, v) in hi {
                grad[i] += coef * v;
            }
            for &(i, v) in lo {
                grad[i] -= coef * v;
            }
        }
        w.iter_mut().zip(&grad).for_each(|(wi, g)| *wi -= LEARNING_RATE * g);
    }
    Ok(InitialRanker {
        weights: w,
        bias: 0.0,
        layout,
    })
}

/// Indices of the group's documents by descending score, ties by doc id.
pub fn rank_initial(ranker: &InitialRanker, group: &QueryGroup) -> Vec<usize> {
    let scores: Vec<f64> = group.documents.iter().map(|d| ranker.score(d)).collect();
    crate::eval::order_by_score(&scores, &group.documents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;

    fn group(qid: u64, feats: &[(f64, u32)]) -> QueryGroup {
        QueryGroup {
            query_id: qid,
            user_features: vec![],
            documents: feats
                .iter()
                .enumerate()
                .map(|(i, &(f, y))| Document {
                    doc_id: i as u64,
                    features: vec![f],
                    graded_relevance: y,
                })
                .collect(),
        }
    }

    #[test]
    fn separable_toy_ranks_positives_first() {
        let ds = Dataset {
            groups: vec![
                group(0, &[(-1.0, 0), (2.0, 1), (-0.5, 0), (1.0, 1)]),
                group(1, &[(0.5, 1), (-2.0, 0)]),
            ],
            y_max: 1,
            schema: FeatureSchema::all_real(1),
        };
        let r = train_initial_ranker(&ds, 1.0, 0).unwrap();
        for g in &ds.groups {
            let order = rank_initial(&r, g);
            let labels: Vec<u32> = order.iter().map(|&i| g.documents[i].graded_relevance).collect();
            let mut sorted = labels.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            assert_eq!(labels, sorted);
        }
    }

    #[test]
    fn all_negative_subset_errors() {
        let ds = Dataset {
            groups: vec![group(0, &[(1.0, 0), (2.0, 0)])],
            y_max: 1,
            schema: FeatureSchema::all_real(1),
        };
        assert!(matches!(train_initial_ranker(&ds, 1.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn rank_order_and_ties() {
        let r = InitialRanker {
            weights: vec![1.0],
            bias: 0.0,
            layout: vec![FeatureKind::Real],
        };
        let g = group(0, &[(0.2, 0), (0.9, 0), (0.5, 0)]);
        assert_eq!(rank_initial(&r, &g), vec![1, 2, 0]);
        let mut tied = group(0, &[(0.3, 0), (0.3, 0), (0.3, 0)]);
        tied.documents[0].doc_id = 9;
        assert_eq!(rank_initial(&r, &tied), vec![1, 2, 0]);
        let single = group(0, &[(0.3, 0)]);
        assert_eq!(rank_initial(&r, &single), vec![0]);
    }
}
