//! Position-shift and item-frequency analyses of rankings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::order_by_score;
use super::report::mean_and_stderr;
use crate::click::{rank_initial, InitialRanker};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{rank_by_relevance, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,stderr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.x, p.y, p.stderr);
        }
        s
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }
}

/// Doc ids of every group in rank order.
pub type Rankings = Vec<Vec<u64>>;

fn ids(ds: &Dataset, orders: Vec<Vec<usize>>) -> Rankings {
    ds.groups
        .iter()
        .zip(orders)
        .map(|(g, o)| o.into_iter().map(|i| g.documents[i].doc_id).collect())
        .collect()
}

pub fn initial_rankings(ranker: &InitialRanker, ds: &Dataset) -> Rankings {
    ids(ds, ds.groups.iter().map(|g| rank_initial(ranker, g)).collect())
}

pub fn model_rankings<T: Scalar>(params: &ModelParams<T>, ds: &Dataset) -> Result<Rankings> {
    let orders = ds
        .groups
        .iter()
        .map(|g| rank_by_relevance(params, g))
        .collect::<Result<_>>()?;
    Ok(ids(ds, orders))
}

/// Rankings by graded label, ties by doc id.
pub fn label_rankings(ds: &Dataset) -> Rankings {
    let orders = ds
        .groups
        .iter()
        .map(|g| {
            let scores: Vec<f64> = g.documents.iter().map(|d| f64::from(d.graded_relevance)).collect();
            order_by_score(&scores, &g.documents)
        })
        .collect();
    ids(ds, orders)
}

fn curve_from_buckets(name: &str, buckets: BTreeMap<usize, (f64, Vec<f64>)>) -> Curve {
    Curve {
        name: name.into(),
        points: buckets
            .into_values()
            .map(|(x, ys)| {
                let (y, stderr) = mean_and_stderr(&ys);
                CurvePoint { x, y, stderr }
            })
            .collect(),
    }
}

/// Mean 1-based rank in `reranked` of the items found at each original rank
/// of `initial`.
pub fn position_shift_curve(initial: &[Vec<u64>], reranked: &[Vec<u64>]) -> Result<Curve> {
    if initial.len() != reranked.len() {
        return Err(Error::Shape(format!(
            "{} initial lists but {} re-ranked lists",
            initial.len(),
            reranked.len()
        )));
    }
    let mut buckets: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    for (q, (a, b)) in initial.iter().zip(reranked).enumerate() {
        let new_rank: BTreeMap<u64, usize> = b.iter().enumerate().map(|(i, &d)| (d, i + 1)).collect();
        let mut sa = a.clone();
        sa.sort_unstable();
        let mut sb = b.clone();
        sb.sort_unstable();
        if sa != sb || new_rank.len() != b.len() {
            return Err(Error::Shape(format!(
                "list {q}: re-ranked documents differ from the initial ones"
            )));
        }
        for (i, d) in a.iter().enumerate() {
            let e = buckets.entry(i + 1).or_insert(((i + 1) as f64, Vec::new()));
            e.1.push(new_rank[d] as f64);
        }
    }
    Ok(curve_from_buckets("position_shift", buckets))
}

/// Position-shift curve of a model plus the reference curve of the
/// label-sorted re-ranking.
pub fn position_shift_analysis(
    initial: &[Vec<u64>],
    reranked: &[Vec<u64>],
    by_label: &[Vec<u64>],
) -> Result<(Curve, Curve)> {
    let model = position_shift_curve(initial, reranked)?;
    let mut reference = position_shift_curve(initial, by_label)?;
    reference.name = "position_shift_labels".into();
    Ok((model, reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAnalysis {
    /// Normalized appearance frequency to mean 1-based rank.
    pub position: Curve,
    /// Normalized appearance frequency to the share of appearances that
    /// land in the top `top_k`.
    pub top_share: Curve,
}

/// Buckets items by how often they appear across `rankings`, normalized by
/// the most frequent item, into `n_buckets` equal-width bins over `(0, 1]`.
pub fn frequency_curve(rankings: &[Vec<u64>], n_buckets: usize, top_k: usize) -> Result<FrequencyAnalysis> {
    if n_buckets == 0 || top_k == 0 {
        return Err(Error::Config(
            "frequency analysis needs n_buckets >= 1 and top_k >= 1".into(),
        ));
    }
    let mut count: BTreeMap<u64, usize> = BTreeMap::new();
    for list in rankings {
        for &d in list {
            *count.entry(d).or_default() += 1;
        }
    }
    let max = count.values().copied().max().unwrap_or(0);
    if max < 2 {
        return Err(Error::Domain(
            "no item appears in more than one list; use a synthetic config whose item pool is \
             smaller than n_queries * docs_per_query"
                .into(),
        ));
    }
    let bucket = |d: u64| {
        let f = count[&d] as f64 / max as f64;
        ((f * n_buckets as f64).ceil() as usize).clamp(1, n_buckets) - 1
    };
    let mut pos: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    let mut top: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    for list in rankings {
        for (i, &d) in list.iter().enumerate() {
            let b = bucket(d);
            let x = (b as f64 + 0.5) / n_buckets as f64;
            pos.entry(b).or_insert((x, Vec::new())).1.push((i + 1) as f64);
            top.entry(b)
                .or_insert((x, Vec::new()))
                .1
                .push(if i < top_k { 1.0 } else { 0.0 });
        }
    }
    Ok(FrequencyAnalysis {
        position: curve_from_buckets("frequency_position", pos),
        top_share: curve_from_buckets("frequency_top_share", top),
    })
}
