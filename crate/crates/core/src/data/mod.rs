//! Query-grouped ranking datasets: types, relevance binarization, filtering
//! and file I/O.

mod sparse;
mod synth;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use sparse::{load_sparse_text, parse_sparse_text, write_sparse_text};
pub use synth::{generate_synthetic, SynthConfig};

/// Default click-noise floor for relevance binarization.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Default maximum list length kept by [`filter_dataset`].
pub const DEFAULT_MAX_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical { vocab: usize },
    Real,
}

/// Slot layout of user and item features.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub user: Vec<FeatureKind>,
    pub item: Vec<FeatureKind>,
}

impl FeatureSchema {
    /// Schema with item slots only, as produced by the sparse text loader.
    pub fn item_only(item: Vec<FeatureKind>) -> Self {
        Self { user: Vec::new(), item }
    }

    pub fn all_real(n_item: usize) -> Self {
        Self::item_only(vec![FeatureKind::Real; n_item])
    }

    fn check_slots(kinds: &[FeatureKind], values: &[f64], what: &str) -> Result<()> {
        if kinds.len() != values.len() {
            return Err(Error::Schema(format!(
                "{what} has {} slots, schema declares {}",
                values.len(),
                kinds.len()
            )));
        }
        for (i, (kind, &v)) in kinds.iter().zip(values).enumerate() {
            match *kind {
                FeatureKind::Categorical { vocab } => {
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= vocab {
                        return Err(Error::Schema(format!(
                            "{what} slot {i}: code {v} outside vocabulary of size {vocab}"
                        )));
                    }
                }
                FeatureKind::Real => {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("{what} slot {i}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u64,
    /// Item slots. Categorical slots hold integer codes.
    pub features: Vec<f64>,
    pub graded_relevance: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub query_id: u64,
    pub user_features: Vec<f64>,
    pub documents: Vec<Document>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn has_positive(&self) -> bool {
        self.documents.iter().any(|d| d.graded_relevance > 0)
    }

    pub fn labels(&self) -> Vec<u32> {
        self.documents.iter().map(|d| d.graded_relevance).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub groups: Vec<QueryGroup>,
    pub y_max: u32,
    pub schema: FeatureSchema,
}

impl Dataset {
    pub fn empty(schema: FeatureSchema, y_max: u32) -> Self {
        Self {
            groups: Vec::new(),
            y_max,
            schema,
        }
    }

    pub fn n_documents(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).sum()
    }

    pub fn max_list_len(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).max().unwrap_or(0)
    }

    /// Checks every group against the schema and the label range.
    pub fn validate(&self) -> Result<()> {
        for g in &self.groups {
            FeatureSchema::check_slots(&self.schema.user, &g.user_features, "user features")?;
            for d in &g.documents {
                FeatureSchema::check_slots(&self.schema.item, &d.features, "item features")?;
                if d.graded_relevance > self.y_max {
                    return Err(Error::Domain(format!(
                        "doc {} has label {} > y_max {}",
                        d.doc_id, d.graded_relevance, self.y_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same schema, subset of groups (by index, in the given order).
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            y_max: self.y_max,
            schema: self.schema.clone(),
        }
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_cache(path: &Path) -> Result<Dataset> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ds: Dataset = serde_json::from_slice(&bytes)?;
        ds.validate()?;
        Ok(ds)
    }
}

/// Probability of binary relevance derived from a graded label.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RelevanceProbability<T>(T);

impl<T: Scalar> RelevanceProbability<T> {
    pub fn get(self) -> T {
        self.0
    }

    /// Hard relevance decision used by the frequency analysis only.
    pub fn is_relevant(self) -> bool {
        self.0 > T::lit(0.5)
    }
}

/// Maps a graded label onto `P(r = 1) = eps + (1 - eps) (2^y - 1) / (2^y_max - 1)`.
pub fn binarize_relevance<T: Scalar>(y: u32, y_max: u32, epsilon: T) -> Result<RelevanceProbability<T>> {
    if y_max == 0 || y > y_max {
        return Err(Error::Domain(format!(
            "label {y} outside [0, {y_max}] (y_max must be >= 1)"
        )));
    }
    if !(epsilon >= T::zero() && epsilon < T::one()) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let two = T::lit(2.0);
    let num = two.powi(y as i32) - T::one();
    let den = two.powi(y_max as i32) - T::one();
    Ok(RelevanceProbability(epsilon + (T::one() - epsilon) * num / den))
}

/// Drops groups without a positive label or longer than `max_len`.
pub fn filter_dataset(dataset: &Dataset, max_len: usize) -> Dataset {
    let groups = dataset
        .groups
        .iter()
        .filter(|g| g.has_positive() && g.len() <= max_len)
        .cloned()
        .collect();
    Dataset {
        groups,
        y_max: dataset.y_max,
        schema: dataset.schema.clone(),
    }
}

/// Train / validation / test partition by query.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle of the groups followed by a fractional cut. The test part
/// takes whatever the first two fractions leave over.
pub fn split_by_query(dataset: &Dataset, train: f64, validation: f64, seed: u64) -> Result<Split> {
    if !(train > 0.0 && validation >= 0.0 && train + validation <= 1.0) {
        return Err(Error::Config(format!(
            "invalid split fractions train={train} validation={validation}"
        )));
    }
    let n = dataset.groups.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train * n as f64).round() as usize;
    let n_val = ((validation * n as f64).round() as usize).min(n - n_train);
    let mut parts = [
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_val].to_vec(),
        idx[n_train + n_val..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    let [a, b, c] = parts;
    Ok(Split {
        train: dataset.select(&a),
        validation: dataset.select(&b),
        test: dataset.select(&c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: u64, y: u32) -> Document {
        Document {
            doc_id: id,
            features: vec![0.0],
            graded_relevance: y,
        }
    }

    fn group(qid: u64, labels: &[u32]) -> QueryGroup {
        QueryGroup {
            query_id: qid,
            user_features: vec![],
            documents: labels.iter().enumerate().map(|(i, &y)| doc(i as u64, y)).collect(),
        }
    }

    #[test]
    fn binarize_endpoints_and_midpoint() {
        let p0 = binarize_relevance(0, 4, 0.1f64).unwrap().get();
        let p4 = binarize_relevance(4, 4, 0.1f64).unwrap().get();
        let p2 = binarize_relevance(2, 4, 0.1f64).unwrap().get();
        assert!((p0 - 0.1).abs() < 1e-15);
        assert!((p4 - 1.0).abs() < 1e-15);
        assert!((p2 - 0.28).abs() < 1e-15);
    }

    #[test]
    fn binarize_table_matches_direct_evaluation() {
        // independent table: eps + (1 - eps) * (2^y - 1) / 15
        let expected = [0.1, 0.16, 0.28, 0.52, 1.0];
        for (y, e) in expected.iter().enumerate() {
            let p = binarize_relevance(y as u32, 4, 0.1f64).unwrap().get();
            assert!((p - e).abs() < 1e-12, "y={y}: {p} vs {e}");
        }
    }

    #[test]
    fn binarize_rejects_out_of_range() {
        assert!(binarize_relevance(5, 4, 0.1f64).is_err());
        assert!(binarize_relevance(0, 0, 0.1f64).is_err());
        assert!(binarize_relevance(1, 4, 1.0f64).is_err());
    }

    #[test]
    fn binarize_works_in_f32() {
        let p = binarize_relevance(2, 4, 0.1f32).unwrap().get();
        assert!((p - 0.28).abs() < 1e-6);
        assert!(!binarize_relevance(2, 4, 0.1f32).unwrap().is_relevant());
        assert!(binarize_relevance(3, 4, 0.1f32).unwrap().is_relevant());
    }

    #[test]
    fn filter_removes_all_zero_and_long_groups() {
        let mut long = group(3, &[1; 51]);
        long.documents[0].graded_relevance = 2;
        let ds = Dataset {
            groups: vec![group(1, &[0, 0, 0]), group(2, &[0, 2]), long],
            y_max: 4,
            schema: FeatureSchema::all_real(1),
        };
        let out = filter_dataset(&ds, 50);
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0], ds.groups[1]);
        assert_eq!(filter_dataset(&out, 50), out);
    }

    #[test]
    fn split_partitions_queries() {
        let ds = Dataset {
            groups: (0..20).map(|q| group(q, &[1, 0])).collect(),
            y_max: 1,
            schema: FeatureSchema::all_real(1),
        };
        let s = split_by_query(&ds, 0.7, 0.15, 3).unwrap();
        assert_eq!(s.train.groups.len(), 14);
        assert_eq!(s.validation.groups.len(), 3);
        assert_eq!(s.test.groups.len(), 3);
        let mut all: Vec<u64> = [&s.train, &s.validation, &s.test]
            .iter()
            .flat_map(|d| d.groups.iter().map(|g| g.query_id))
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn validate_flags_bad_codes() {
        let ds = Dataset {
            groups: vec![QueryGroup {
                query_id: 0,
                user_features: vec![],
                documents: vec![Document {
                    doc_id: 0,
                    features: vec![3.0],
                    graded_relevance: 1,
                }],
            }],
            y_max: 1,
            schema: FeatureSchema::item_only(vec![FeatureKind::Categorical { vocab: 3 }]),
        };
        assert!(matches!(ds.validate(), Err(Error::Schema(_))));
    }
}
