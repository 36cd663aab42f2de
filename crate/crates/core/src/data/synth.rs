//! Synthetic ranking data with a hidden bilinear user-item utility.
//!
//! Every categorical code and real feature maps into a latent space through
//! hidden random tables. Graded labels come from quantiles of
//! `interaction * u'Mv + quality * a'v + noise` over the whole dataset, so
//! each grade holds the same share of documents. Items live in a fixed pool
//! and are reused across queries (optionally Zipf-skewed) so that item
//! popularity can be measured downstream.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Document, FeatureKind, FeatureSchema, QueryGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub docs_per_query: usize,
    /// Size of the shared item pool.
    pub n_items: usize,
    /// Vocabulary sizes of the categorical user slots.
    pub user_vocab: Vec<usize>,
    pub n_user_real: usize,
    /// Vocabulary sizes of the categorical item slots.
    pub item_vocab: Vec<usize>,
    pub n_item_real: usize,
    pub latent_dim: usize,
    pub interaction_weight: f64,
    pub quality_weight: f64,
    pub noise_std: f64,
    /// Zipf exponent over the item pool; 0 samples items uniformly.
    pub popularity_skew: f64,
    pub y_max: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_queries: 200,
            docs_per_query: 20,
            n_items: 500,
            user_vocab: vec![6, 4],
            n_user_real: 1,
            item_vocab: vec![10, 6],
            n_item_real: 2,
            latent_dim: 4,
            interaction_weight: 1.0,
            quality_weight: 1.0,
            noise_std: 0.3,
            popularity_skew: 0.5,
            y_max: 4,
        }
    }
}

impl SynthConfig {
    pub fn schema(&self) -> FeatureSchema {
        let slots = |vocab: &[usize], n_real: usize| {
            vocab
                .iter()
                .map(|&v| FeatureKind::Categorical { vocab: v })
                .chain(std::iter::repeat_n(FeatureKind::Real, n_real))
                .collect()
        };
        FeatureSchema {
            user: slots(&self.user_vocab, self.n_user_real),
            item: slots(&self.item_vocab, self.n_item_real),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.docs_per_query == 0 {
            return fail("docs_per_query must be at least 1");
        }
        if self.n_items < self.docs_per_query {
            return fail("n_items must be >= docs_per_query (documents in a query are distinct)");
        }
        if self.y_max == 0 {
            return fail("y_max must be at least 1");
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1");
        }
        if self.user_vocab.iter().chain(&self.item_vocab).any(|&v| v == 0) {
            return fail("vocabulary sizes must be positive");
        }
        if self.user_vocab.len() + self.n_user_real == 0 || self.item_vocab.len() + self.n_item_real == 0 {
            return fail("user and item each need at least one feature slot");
        }
        if !(self.noise_std >= 0.0 && self.popularity_skew >= 0.0) {
            return fail("noise_std and popularity_skew must be non-negative");
        }
        Ok(())
    }
}

/// Hidden map from observed slots into the latent space.
struct LatentMap {
    tables: Vec<Vec<Vec<f64>>>,
    real_proj: Vec<Vec<f64>>,
}

impl LatentMap {
    fn sample(rng: &mut ChaCha8Rng, vocab: &[usize], n_real: usize, k: usize) -> Self {
        let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let tables = vocab.iter().map(|&v| (0..v).map(|_| gauss(k)).collect()).collect();
        let real_proj = (0..n_real).map(|_| gauss(k)).collect();
        Self { tables, real_proj }
    }

    fn embed(&self, features: &[f64], k: usize) -> Vec<f64> {
        let n_cat = self.tables.len();
        let mut z = vec![0.0; k];
        for (table, &code) in self.tables.iter().zip(features) {
            for (zi, ti) in z.iter_mut().zip(&table[code as usize]) {
                *zi += ti;
            }
        }
        for (proj, &v) in self.real_proj.iter().zip(&features[n_cat..]) {
            for (zi, pi) in z.iter_mut().zip(proj) {
                *zi += v * pi;
            }
        }
        let scale = ((n_cat + self.real_proj.len()) as f64).sqrt();
        z.iter_mut().for_each(|zi| *zi /= scale);
        z
    }
}

fn sample_features(rng: &mut ChaCha8Rng, vocab: &[usize], n_real: usize) -> Vec<f64> {
    let mut f: Vec<f64> = vocab.iter().map(|&v| rng.random_range(0..v) as f64).collect();
    f.extend((0..n_real).map(|_| rng.sample::<f64, _>(StandardNormal)));
    f
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.latent_dim;

    let user_map = LatentMap::sample(&mut rng, &config.user_vocab, config.n_user_real, k);
    let item_map = LatentMap::sample(&mut rng, &config.item_vocab, config.n_item_real, k);
    let kscale = (k as f64).sqrt();
    let interaction: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal) / kscale).collect())
        .collect();
    let quality: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal) / kscale).collect();

    let items: Vec<Vec<f64>> = (0..config.n_items)
        .map(|_| sample_features(&mut rng, &config.item_vocab, config.n_item_real))
        .collect();
    let item_latent: Vec<Vec<f64>> = items.iter().map(|f| item_map.embed(f, k)).collect();
    let pool: Vec<usize> = (0..config.n_items).collect();

    let mut groups = Vec::with_capacity(config.n_queries);
    let mut utilities = Vec::with_capacity(config.n_queries * config.docs_per_query);
    for qid in 0..config.n_queries {
        let user = sample_features(&mut rng, &config.user_vocab, config.n_user_real);
        let u = user_map.embed(&user, k);
        let mu: Vec<f64> = (0..k).map(|b| (0..k).map(|a| u[a] * interaction[a][b]).sum()).collect();
        let chosen: Vec<usize> = pool
            .choose_multiple_weighted(&mut rng, config.docs_per_query, |&i| {
                ((i + 1) as f64).powf(-config.popularity_skew)
            })
            .map_err(|e| Error::Config(format!("item sampling failed: {e}")))?
            .copied()
            .collect();
        let mut documents = Vec::with_capacity(chosen.len());
        for item in chosen {
            let v = &item_latent[item];
            let bilinear: f64 = mu.iter().zip(v).map(|(a, b)| a * b).sum();
            let q: f64 = quality.iter().zip(v).map(|(a, b)| a * b).sum();
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * config.noise_std;
            utilities.push(config.interaction_weight * bilinear + config.quality_weight * q + noise);
            documents.push(Document {
                doc_id: item as u64,
                features: items[item].clone(),
                graded_relevance: 0,
            });
        }
        groups.push(QueryGroup {
            query_id: qid as u64,
            user_features: user,
            documents,
        });
    }

    // grade = quantile bucket of the utility over all documents
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_by(|&a, &b| utilities[a].total_cmp(&utilities[b]).then(a.cmp(&b)));
    let levels = config.y_max as usize + 1;
    let total = utilities.len();
    let mut grades = vec![0u32; total];
    for (rank, &i) in order.iter().enumerate() {
        grades[i] = (rank * levels / total) as u32;
    }
    let mut it = grades.into_iter();
    for g in &mut groups {
        for d in &mut g.documents {
            d.graded_relevance = it.next().expect("one grade per document");
        }
    }

    Ok(Dataset {
        groups,
        y_max: config.y_max,
        schema: config.schema(),
    })
}
