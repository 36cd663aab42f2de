//! Biased click logs: initial ranking, browsing simulation and the
//! JSON-lines log format.

mod models;
mod ranker;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{binarize_relevance, Dataset, Document, FeatureKind, FeatureSchema, QueryGroup};
use crate::error::{Error, Result};

pub use models::{browse_ccm, browse_pbm, browse_ubm, CcmParams, ClickModel, Interaction, PbmParams, UbmParams};
pub use ranker::{rank_initial, train_initial_ranker, InitialRanker};

pub const CLICK_LOG_FORMAT: &str = "inforank-clicklog";
pub const CLICK_LOG_VERSION: u32 = 1;

/// One document shown at one rank in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    pub query_id: u64,
    pub doc_id: u64,
    /// 1-based rank.
    pub position: usize,
    pub observed: bool,
    pub clicked: bool,
    /// Combined `[user | item | position code]` vector.
    pub features: Vec<f64>,
    /// Marginal examination probability of this rank under the simulator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propensity: Option<f64>,
}

/// Slot layout of the combined feature vector: user, item, then position.
pub fn combined_slots(schema: &FeatureSchema, max_rank: usize) -> Vec<FeatureKind> {
    schema
        .user
        .iter()
        .chain(&schema.item)
        .copied()
        .chain(std::iter::once(FeatureKind::Categorical { vocab: max_rank }))
        .collect()
}

/// `[user features | item features | position - 1]`.
pub fn build_feature_vector(
    user_features: &[f64],
    doc: &Document,
    position: usize,
    max_rank: usize,
) -> Result<Vec<f64>> {
    if position == 0 || position > max_rank {
        return Err(Error::Domain(format!("position {position} outside 1..={max_rank}")));
    }
    let mut x = Vec::with_capacity(user_features.len() + doc.features.len() + 1);
    x.extend_from_slice(user_features);
    x.extend_from_slice(&doc.features);
    x.push((position - 1) as f64);
    Ok(x)
}

/// A logged ranking ready for browsing simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: u64,
    pub doc_ids: Vec<u64>,
    pub features: Vec<Vec<f64>>,
}

impl RankedList {
    /// Lays out `order` (indices into the group) at ranks `1..`.
    pub fn from_group(group: &QueryGroup, order: &[usize], max_rank: usize) -> Result<Self> {
        let mut doc_ids = Vec::with_capacity(order.len());
        let mut features = Vec::with_capacity(order.len());
        for (i, &di) in order.iter().enumerate() {
            let doc = &group.documents[di];
            doc_ids.push(doc.doc_id);
            features.push(build_feature_vector(&group.user_features, doc, i + 1, max_rank)?);
        }
        Ok(Self {
            query_id: group.query_id,
            doc_ids,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

fn to_records(list: &RankedList, session: &[Interaction], propensity: Option<&[f64]>) -> Vec<ImpressionRecord> {
    session
        .iter()
        .enumerate()
        .map(|(i, s)| ImpressionRecord {
            query_id: list.query_id,
            doc_id: list.doc_ids[i],
            position: i + 1,
            observed: s.observed,
            clicked: s.clicked,
            features: list.features[i].clone(),
            propensity: propensity.map(|p| p[i]),
        })
        .collect()
}

fn check_lengths(list: &RankedList, rel_probs: &[f64]) -> Result<()> {
    if list.len() != rel_probs.len() {
        return Err(Error::Shape(format!(
            "{} ranked documents but {} relevance probabilities",
            list.len(),
            rel_probs.len()
        )));
    }
    Ok(())
}

pub fn simulate_pbm<R: Rng + ?Sized>(
    list: &RankedList,
    rel_probs: &[f64],
    params: &PbmParams,
    rng: &mut R,
) -> Result<Vec<ImpressionRecord>> {
    check_lengths(list, rel_probs)?;
    simulate(list, rel_probs, &ClickModel::Pbm(params.clone()), rng)
}

pub fn simulate_ubm<R: Rng + ?Sized>(
    list: &RankedList,
    rel_probs: &[f64],
    params: &UbmParams,
    rng: &mut R,
) -> Result<Vec<ImpressionRecord>> {
    check_lengths(list, rel_probs)?;
    simulate(list, rel_probs, &ClickModel::Ubm(params.clone()), rng)
}

pub fn simulate_ccm<R: Rng + ?Sized>(
    list: &RankedList,
    rel_probs: &[f64],
    params: &CcmParams,
    rng: &mut R,
) -> Result<Vec<ImpressionRecord>> {
    check_lengths(list, rel_probs)?;
    simulate(list, rel_probs, &ClickModel::Ccm(*params), rng)
}

/// One browsing session over `list`; records carry the closed-form
/// examination marginal of their rank as propensity.
pub fn simulate<R: Rng + ?Sized>(
    list: &RankedList,
    rel_probs: &[f64],
    model: &ClickModel,
    rng: &mut R,
) -> Result<Vec<ImpressionRecord>> {
    check_lengths(list, rel_probs)?;
    let session = model.browse(rel_probs, rng)?;
    let (obs, _) = model.marginals(rel_probs)?;
    Ok(to_records(list, &session, Some(&obs)))
}

/// Settings for turning a dataset into a click log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: ClickModel,
    pub sessions_per_query: usize,
    pub epsilon: f64,
    pub max_rank: usize,
}

/// Per-query generator: the stream id is the query id, so a query's
/// sessions do not depend on which other queries are simulated.
pub fn query_rng(seed: u64, query_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(query_id);
    rng
}

/// Ranks every group with `ranker` and simulates the configured sessions.
pub fn simulate_dataset(
    dataset: &Dataset,
    ranker: &InitialRanker,
    config: &SimulationConfig,
    seed: u64,
) -> Result<ClickLog> {
    config.model.validate()?;
    if dataset.max_list_len() > config.max_rank {
        return Err(Error::Config(format!(
            "lists of length {} exceed max_rank {}",
            dataset.max_list_len(),
            config.max_rank
        )));
    }
    let mut records = Vec::new();
    for group in &dataset.groups {
        let order = rank_initial(ranker, group);
        let list = RankedList::from_group(group, &order, config.max_rank)?;
        let rel = order
            .iter()
            .map(|&i| {
                binarize_relevance(group.documents[i].graded_relevance, dataset.y_max, config.epsilon).map(|p| p.get())
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut rng = query_rng(seed, group.query_id);
        for _ in 0..config.sessions_per_query {
            records.extend(simulate(&list, &rel, &config.model, &mut rng)?);
        }
    }
    Ok(ClickLog {
        schema: dataset.schema.clone(),
        max_rank: config.max_rank,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogHeader {
    format: String,
    version: u32,
    schema: FeatureSchema,
    max_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub schema: FeatureSchema,
    pub max_rank: usize,
    pub records: Vec<ImpressionRecord>,
}

impl ClickLog {
    pub fn slots(&self) -> Vec<FeatureKind> {
        combined_slots(&self.schema, self.max_rank)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = LogHeader {
            format: CLICK_LOG_FORMAT.into(),
            version: CLICK_LOG_VERSION,
            schema: self.schema.clone(),
            max_rank: self.max_rank,
        };
        let io = |e| Error::io("<click log>", e);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<ClickLog> {
        let mut lines = r.lines().enumerate();
        let header: LogHeader = match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io("<click log>", e))?;
                serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad header: {e}"),
                })?
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
        };
        if header.format != CLICK_LOG_FORMAT || header.version != CLICK_LOG_VERSION {
            return Err(Error::Schema(format!(
                "unsupported click log {} v{}",
                header.format, header.version
            )));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io("<click log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImpressionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if rec.clicked && !rec.observed {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "clicked impression must be observed".into(),
                });
            }
            records.push(rec);
        }
        Ok(ClickLog {
            schema: header.schema,
            max_rank: header.max_rank,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<ClickLog> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(f))
    }
}
