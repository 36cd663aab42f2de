use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::click::{build_feature_vector, ImpressionRecord};
use crate::data::{binarize_relevance, Dataset};
use crate::error::{Error, Result};

/// Duplicate impressions of one `(query, doc, position)` merged into counts.
///
/// Every per-impression loss term depends on the record only through its
/// features and outcome, so a weighted example reproduces the sum over its
/// records exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub query_id: u64,
    pub doc_id: u64,
    pub position: usize,
    pub features: Vec<f64>,
    /// Number of impressions.
    pub count: f64,
    /// Number of clicks (a probability mass for soft targets).
    pub clicks: f64,
    /// Number of impressions with a logged observation.
    pub observed: f64,
    pub propensity: Option<f64>,
}

/// Groups records by `(query, doc, position)`, ordered by that key.
pub fn aggregate_impressions(records: &[ImpressionRecord]) -> Result<Vec<Example>> {
    let mut map: BTreeMap<(u64, usize, u64), Example> = BTreeMap::new();
    for r in records {
        let e = map
            .entry((r.query_id, r.position, r.doc_id))
            .or_insert_with(|| Example {
                query_id: r.query_id,
                doc_id: r.doc_id,
                position: r.position,
                features: r.features.clone(),
                count: 0.0,
                clicks: 0.0,
                observed: 0.0,
                propensity: r.propensity,
            });
        if e.features != r.features {
            return Err(Error::Schema(format!(
                "query {} doc {} position {}: conflicting feature vectors",
                r.query_id, r.doc_id, r.position
            )));
        }
        e.count += 1.0;
        e.clicks += f64::from(u8::from(r.clicked));
        e.observed += f64::from(u8::from(r.observed));
    }
    Ok(map.into_values().collect())
}

/// One soft-labeled example per document, target `P(r = 1)` of the graded
/// label, placed at `position`.
pub fn labeled_examples(dataset: &Dataset, epsilon: f64, position: usize, max_rank: usize) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(dataset.n_documents());
    for g in &dataset.groups {
        for d in &g.documents {
            out.push(Example {
                query_id: g.query_id,
                doc_id: d.doc_id,
                position,
                features: build_feature_vector(&g.user_features, d, position, max_rank)?,
                count: 1.0,
                clicks: binarize_relevance::<f64>(d.graded_relevance, dataset.y_max, epsilon)?.get(),
                observed: 1.0,
                propensity: None,
            });
        }
    }
    Ok(out)
}

/// Total impression count.
pub fn total_count(examples: &[Example]) -> f64 {
    examples.iter().map(|e| e.count).sum()
}
