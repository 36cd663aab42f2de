//! SVMLight-style text format: `<label> qid:<q> <idx>:<val> ... # comment`.
//!
//! Feature indices are 1-based and strictly increasing; absent indices are
//! zero. Documents receive sequential ids in file order and the label
//! ceiling is the largest label seen (at least 1).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Document, FeatureSchema, QueryGroup};
use crate::error::{Error, Result};

pub fn load_sparse_text(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sparse_text(&text, schema)
}

pub fn parse_sparse_text(text: &str, schema: &FeatureSchema) -> Result<Dataset> {
    if !schema.user.is_empty() {
        return Err(Error::Schema(
            "sparse text carries item features only; schema must have no user slots".into(),
        ));
    }
    let n_slots = schema.item.len();
    let mut groups: Vec<QueryGroup> = Vec::new();
    let mut by_qid: HashMap<u64, usize> = HashMap::new();
    let mut next_doc = 0u64;
    let mut y_max = 1u32;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line, msg };
        let mut tokens = body.split_whitespace();

        let label_tok = tokens.next().ok_or_else(|| perr("missing label".into()))?;
        let label: u32 = label_tok
            .parse()
            .map_err(|_| perr(format!("label `{label_tok}` is not a non-negative integer")))?;

        let qid_tok = tokens.next().ok_or_else(|| perr("missing qid".into()))?;
        let qid: u64 = qid_tok
            .strip_prefix("qid:")
            .and_then(|q| q.parse().ok())
            .ok_or_else(|| perr(format!("expected `qid:<int>`, found `{qid_tok}`")))?;

        let mut features = vec![0.0; n_slots];
        let mut last_idx = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("feature `{tok}` is not `<idx>:<val>`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| perr(format!("feature index `{idx}` is not an integer")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| perr(format!("feature value `{val}` is not a number")))?;
            if idx == 0 || idx <= last_idx {
                return Err(perr(format!(
                    "feature indices must be 1-based and strictly increasing (got {idx} after {last_idx})"
                )));
            }
            if idx > n_slots {
                return Err(perr(format!("unknown feature index {idx}; schema has {n_slots} slots")));
            }
            features[idx - 1] = val;
            last_idx = idx;
        }

        y_max = y_max.max(label);
        let gi = *by_qid.entry(qid).or_insert_with(|| {
            groups.push(QueryGroup {
                query_id: qid,
                user_features: Vec::new(),
                documents: Vec::new(),
            });
            groups.len() - 1
        });
        groups[gi].documents.push(Document {
            doc_id: next_doc,
            features,
            graded_relevance: label,
        });
        next_doc += 1;
    }

    let ds = Dataset {
        groups,
        y_max,
        schema: schema.clone(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Serializes item features; zero-valued slots are omitted.
pub fn write_sparse_text(dataset: &Dataset) -> String {
    let mut out = String::new();
    for g in &dataset.groups {
        for d in &g.documents {
            write!(out, "{} qid:{}", d.graded_relevance, g.query_id).unwrap();
            for (i, v) in d.features.iter().enumerate() {
                if *v != 0.0 {
                    write!(out, " {}:{}", i + 1, v).unwrap();
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema(n: usize) -> FeatureSchema {
        FeatureSchema::all_real(n)
    }

    #[test]
    fn parses_single_line() {
        let ds = parse_sparse_text("2 qid:1 1:0.5 3:1.0", &schema(3)).unwrap();
        assert_eq!(ds.groups.len(), 1);
        let d = &ds.groups[0].documents[0];
        assert_eq!(d.graded_relevance, 2);
        assert_eq!(d.features, vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds = parse_sparse_text("", &schema(3)).unwrap();
        assert!(ds.groups.is_empty());
        let ds = parse_sparse_text("# only a comment\n\n", &schema(3)).unwrap();
        assert!(ds.groups.is_empty());
    }

    #[test]
    fn non_integer_label_reports_line() {
        let err = parse_sparse_text("1 qid:1 1:0.5\nx qid:1 1:0.5", &schema(3)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_unknown_and_unordered_indices() {
        assert!(parse_sparse_text("1 qid:1 4:0.5", &schema(3)).is_err());
        assert!(parse_sparse_text("1 qid:1 2:0.5 1:0.1", &schema(3)).is_err());
        assert!(parse_sparse_text("1 qid:1 0:0.5", &schema(3)).is_err());
        assert!(parse_sparse_text("1 1:0.5", &schema(3)).is_err());
    }

    #[test]
    fn groups_by_key_with_interleaved_qids() {
        let text = "1 qid:7 1:1\n0 qid:3 1:2\n2 qid:7 1:3 # trailing\n";
        let ds = parse_sparse_text(text, &schema(1)).unwrap();
        assert_eq!(ds.groups.len(), 2);
        assert_eq!(ds.groups[0].query_id, 7);
        assert_eq!(ds.groups[0].labels(), vec![1, 2]);
        assert_eq!(ds.groups[1].query_id, 3);
        assert_eq!(ds.y_max, 2);
    }

    fn line_strategy() -> impl Strategy<Value = (u32, u64, Vec<Option<f64>>)> {
        (
            0u32..5,
            0u64..4,
            proptest::collection::vec(
                proptest::option::of((-1000i32..1000).prop_filter("nonzero", |v| *v != 0)),
                4,
            ),
        )
            .prop_map(|(y, q, vals)| (y, q, vals.into_iter().map(|v| v.map(|x| x as f64 / 8.0)).collect()))
    }

    proptest! {
        #[test]
        fn write_then_parse_reproduces_text(lines in proptest::collection::vec(line_strategy(), 0..12)) {
            // canonical text: qids in first-appearance order, grouped
            let mut order: Vec<u64> = Vec::new();
            for (_, q, _) in &lines {
                if !order.contains(q) { order.push(*q); }
            }
            let mut text = String::new();
            for q in &order {
                for (y, q2, vals) in &lines {
                    if q2 != q { continue; }
                    text.push_str(&format!("{y}  qid:{q}"));
                    for (i, v) in vals.iter().enumerate() {
                        if let Some(v) = v { text.push_str(&format!("\t{}:{}", i + 1, v)); }
                    }
                    text.push('\n');
                }
            }
            let ds = parse_sparse_text(&text, &schema(4)).unwrap();
            let normalized: Vec<String> = text.lines()
                .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
                .collect();
            let written: Vec<String> = write_sparse_text(&ds).lines().map(str::to_owned).collect();
            prop_assert_eq!(written, normalized);
        }
    }
}
