//! Ranking quality metrics over graded labels listed in ranked order.

use std::cmp::Ordering;

use crate::data::Document;
use crate::scalar::Scalar;

/// Document indices by descending score; equal scores fall back to ascending
/// doc id and NaN scores sink to the bottom.
pub fn order_by_score<T: Scalar>(scores: &[T], docs: &[Document]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        let by_score = match (sa.is_nan(), sb.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => sb.partial_cmp(&sa).unwrap_or(Ordering::Equal),
        };
        by_score.then(docs[a].doc_id.cmp(&docs[b].doc_id))
    });
    idx
}

fn gain<T: Scalar>(y: u32) -> T {
    T::lit(2.0).powi(y as i32) - T::one()
}

fn dcg<T: Scalar>(labels: &[u32], k: usize) -> T {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &y)| gain::<T>(y) / T::lit((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with gain `2^y - 1` and discount `log2(i + 1)`. `None` when the
/// query has no positive label (ideal DCG of zero).
pub fn ndcg_at_k<T: Scalar>(ranked_labels: &[u32], k: usize) -> Option<T> {
    assert!(k >= 1, "cutoff must be at least 1");
    let mut ideal = ranked_labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: T = dcg(&ideal, k);
    if idcg <= T::zero() {
        return None;
    }
    Some(dcg::<T>(ranked_labels, k) / idcg)
}

/// Average precision truncated at `k`, normalized by `min(#relevant, k)`.
/// `None` when nothing in the list is relevant.
pub fn average_precision_at_k<T: Scalar>(ranked_binary: &[bool], k: usize) -> Option<T> {
    let total = ranked_binary.iter().filter(|&&r| r).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = T::zero();
    for (i, &rel) in ranked_binary.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum = sum + T::lit(hits as f64) / T::lit((i + 1) as f64);
        }
    }
    Some(sum / T::lit(total.min(k) as f64))
}

/// MAP@10 over queries given in ranked order; graded labels > 0 count as
/// relevant and queries without relevant documents are skipped.
pub fn map_at_10<T: Scalar>(queries: &[Vec<u32>]) -> Option<T> {
    mean(queries.iter().map(|q| {
        let bin: Vec<bool> = q.iter().map(|&y| y > 0).collect();
        average_precision_at_k::<T>(&bin, 10)
    }))
}

/// Mean NDCG@k over queries, skipping those without a positive label.
pub fn mean_ndcg<T: Scalar>(queries: &[Vec<u32>], k: usize) -> Option<T> {
    mean(queries.iter().map(|q| ndcg_at_k::<T>(q, k)))
}

/// Mean of the defined values; `None` when there are none.
pub fn mean<T: Scalar>(values: impl IntoIterator<Item = Option<T>>) -> Option<T> {
    let mut n = 0usize;
    let mut sum = T::zero();
    for v in values.into_iter().flatten() {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / T::lit(n as f64))
}
