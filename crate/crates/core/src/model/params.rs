use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which prediction heads a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Observation head plus observation-conditioned relevance head.
    Factorized,
    /// One sigmoid head scoring the features directly (baselines).
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Layout of the combined input vector; the last slot is the position.
    pub slots: Vec<FeatureKind>,
    pub dim: usize,
    pub heads: usize,
    /// Hidden widths of both MLP heads.
    pub hidden: Vec<usize>,
    /// Softmax temperature of the slot attention.
    pub temperature: f64,
    pub variant: Variant,
    /// Whether the position slot is fed to the encoder.
    pub use_position: bool,
    /// Position assumed for every document when ranking.
    pub inference_position: usize,
}

impl ModelConfig {
    pub fn new(slots: Vec<FeatureKind>, dim: usize, heads: usize) -> Self {
        Self {
            slots,
            dim,
            heads,
            hidden: vec![2 * dim, dim],
            temperature: 1.0,
            variant: Variant::Factorized,
            use_position: true,
            inference_position: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 {
            return Err(Error::Config("model dim and head count must be >= 1".into()));
        }
        if self.slots.is_empty() || (!self.use_position && self.slots.len() < 2) {
            return Err(Error::Config("model needs at least one feature slot".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("attention temperature must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.inference_position == 0 {
            return Err(Error::Config("inference position is 1-based".into()));
        }
        if let Some(FeatureKind::Categorical { vocab }) = self.slots.last() {
            if self.inference_position > *vocab {
                return Err(Error::Config(format!(
                    "inference position {} beyond position vocabulary {vocab}",
                    self.inference_position
                )));
            }
        }
        Ok(())
    }

    /// Number of input slots consumed by the encoder (without the token).
    pub fn active_slots(&self) -> usize {
        self.slots.len() - usize::from(!self.use_position)
    }
}

/// Affine layer `y = W x + b` with `W (out x in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

/// Rectifier MLP ending in a single sigmoid unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    fn init(input: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                w: Tensor::glorot(w[1], w[0], w[0], w[1], rng),
                b: Tensor::zeros(1, w[1]),
            })
            .collect();
        Self { layers }
    }
}

/// Every trainable tensor of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// Categorical slot: `vocab x d` table. Real slot: `2 x d`, rows are the
    /// projection weight and bias.
    pub embeddings: Vec<Tensor<T>>,
    /// Embeddings of the observation value (row 0: `o = 0`, row 1: `o = 1`).
    pub obs_token: Tensor<T>,
    pub w_t: Vec<Tensor<T>>,
    pub w_s: Vec<Tensor<T>>,
    pub w_c: Vec<Tensor<T>>,
    pub w_q: Tensor<T>,
    pub b_q: Tensor<T>,
    pub w_p: Tensor<T>,
    pub b_p: Tensor<T>,
    /// Output projection applied as `w^T tanh(...)`.
    pub w_out: Tensor<T>,
    pub relevance_head: Mlp<T>,
    pub observation_head: Mlp<T>,
}

/// Gradient of a scalar loss, laid out exactly like [`ModelParams`].
pub type GradientSet<T> = ModelParams<T>;

/// Random initialization: Glorot-uniform weights, zero biases.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.dim;
    let embeddings = config
        .slots
        .iter()
        .map(|kind| match *kind {
            FeatureKind::Categorical { vocab } => Tensor::glorot(vocab, d, vocab, d, &mut rng),
            FeatureKind::Real => {
                let mut t = Tensor::zeros(2, d);
                let w = Tensor::<T>::glorot(1, d, 1, d, &mut rng);
                t.row_mut(0).copy_from_slice(&w.data);
                t
            }
        })
        .collect();
    let obs_token = Tensor::glorot(2, d, 2, d, &mut rng);
    let mut square = |_| Tensor::glorot(d, d, d, d, &mut rng);
    let w_t = (0..config.heads).map(&mut square).collect();
    let w_s = (0..config.heads).map(&mut square).collect();
    let w_c = (0..config.heads).map(&mut square).collect();
    let w_q = square(0);
    let w_p = square(0);
    let w_out = square(0);
    let relevance_head = Mlp::init(d, &config.hidden, &mut rng);
    let observation_head = Mlp::init(d, &config.hidden, &mut rng);
    Ok(ModelParams {
        config: config.clone(),
        embeddings,
        obs_token,
        w_t,
        w_s,
        w_c,
        w_q,
        b_q: Tensor::zeros(1, d),
        w_p,
        b_p: Tensor::zeros(1, d),
        w_out,
        relevance_head,
        observation_head,
    })
}

impl<T: Scalar> ModelParams<T> {
    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(T::zero()));
        z
    }

    /// Every tensor in a fixed order with a stable name.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = Vec::new();
        for (i, t) in self.embeddings.iter().enumerate() {
            out.push((format!("embedding[{i}]"), t));
        }
        out.push(("obs_token".into(), &self.obs_token));
        for (h, ((a, b), c)) in self.w_t.iter().zip(&self.w_s).zip(&self.w_c).enumerate() {
            out.push((format!("w_t[{h}]"), a));
            out.push((format!("w_s[{h}]"), b));
            out.push((format!("w_c[{h}]"), c));
        }
        out.push(("w_q".into(), &self.w_q));
        out.push(("b_q".into(), &self.b_q));
        out.push(("w_p".into(), &self.w_p));
        out.push(("b_p".into(), &self.b_p));
        out.push(("w_out".into(), &self.w_out));
        for (name, mlp) in [
            ("relevance_head", &self.relevance_head),
            ("observation_head", &self.observation_head),
        ] {
            for (l, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("{name}.w[{l}]"), &layer.w));
                out.push((format!("{name}.b[{l}]"), &layer.b));
            }
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = Vec::new();
        for (i, t) in self.embeddings.iter_mut().enumerate() {
            out.push((format!("embedding[{i}]"), t));
        }
        out.push(("obs_token".into(), &mut self.obs_token));
        for (h, ((a, b), c)) in self
            .w_t
            .iter_mut()
            .zip(self.w_s.iter_mut())
            .zip(self.w_c.iter_mut())
            .enumerate()
        {
            out.push((format!("w_t[{h}]"), a));
            out.push((format!("w_s[{h}]"), b));
            out.push((format!("w_c[{h}]"), c));
        }
        out.push(("w_q".into(), &mut self.w_q));
        out.push(("b_q".into(), &mut self.b_q));
        out.push(("w_p".into(), &mut self.w_p));
        out.push(("b_p".into(), &mut self.b_p));
        out.push(("w_out".into(), &mut self.w_out));
        for (name, mlp) in [
            ("relevance_head", &mut self.relevance_head),
            ("observation_head", &mut self.observation_head),
        ] {
            for (l, layer) in mlp.layers.iter_mut().enumerate() {
                out.push((format!("{name}.w[{l}]"), &mut layer.w));
                out.push((format!("{name}.b[{l}]"), &mut layer.b));
            }
        }
        out
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, &Tensor<T>)) {
        for (name, t) in self.tensors() {
            f(&name, t);
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<T>)) {
        for (name, t) in self.tensors_mut() {
            f(&name, t);
        }
    }

    /// Visits matching tensors of `self` and `other` pairwise.
    pub fn zip_mut(&mut self, other: &Self, mut f: impl FnMut(&str, &mut Tensor<T>, &Tensor<T>)) -> Result<()> {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Shape("parameter sets hold different tensor counts".into()));
        }
        if let Some(((name, _), _)) = mine.iter().zip(&theirs).find(|((_, a), (_, b))| a.shape() != b.shape()) {
            return Err(Error::Shape(format!("parameter sets differ at {name}")));
        }
        for ((name, a), (_, b)) in mine.into_iter().zip(theirs) {
            f(&name, a, b);
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.data.len());
        n
    }

    pub fn sum_squares(&self) -> T {
        let mut s = T::zero();
        self.for_each(|_, t| s = s + t.sum_squares());
        s
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut bad = None;
        self.for_each(|name, t| {
            if bad.is_none() && !t.all_finite() {
                bad = Some(name.to_owned());
            }
        });
        bad
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mlp = |m: &Mlp<T>| Mlp {
            layers: m
                .layers
                .iter()
                .map(|l| Dense {
                    w: l.w.cast(),
                    b: l.b.cast(),
                })
                .collect(),
        };
        ModelParams {
            config: self.config.clone(),
            embeddings: self.embeddings.iter().map(Tensor::cast).collect(),
            obs_token: self.obs_token.cast(),
            w_t: self.w_t.iter().map(Tensor::cast).collect(),
            w_s: self.w_s.iter().map(Tensor::cast).collect(),
            w_c: self.w_c.iter().map(Tensor::cast).collect(),
            w_q: self.w_q.cast(),
            b_q: self.b_q.cast(),
            w_p: self.w_p.cast(),
            b_p: self.b_p.cast(),
            w_out: self.w_out.cast(),
            relevance_head: mlp(&self.relevance_head),
            observation_head: mlp(&self.observation_head),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ModelConfig {
        ModelConfig::new(
            vec![
                FeatureKind::Categorical { vocab: 3 },
                FeatureKind::Real,
                FeatureKind::Categorical { vocab: 5 },
            ],
            8,
            2,
        )
    }

    #[test]
    fn init_is_deterministic() {
        let a: ModelParams<f64> = init_params(&config(), 3).unwrap();
        let b: ModelParams<f64> = init_params(&config(), 3).unwrap();
        assert_eq!(a, b);
        let c: ModelParams<f64> = init_params(&config(), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero_and_shapes_match() {
        let p: ModelParams<f64> = init_params(&config(), 1).unwrap();
        assert!(p.b_q.data.iter().chain(&p.b_p.data).all(|&v| v == 0.0));
        for mlp in [&p.relevance_head, &p.observation_head] {
            assert!(mlp.layers.iter().all(|l| l.b.data.iter().all(|&v| v == 0.0)));
            let widths: Vec<_> = mlp.layers.iter().map(|l| l.w.shape()).collect();
            assert_eq!(widths, vec![(16, 8), (8, 16), (1, 8)]);
        }
        assert!(p.embeddings[1].row(1).iter().all(|&v| v == 0.0));
        assert_eq!(p.w_t.len(), 2);
        assert!(p.w_t.iter().chain(&p.w_s).chain(&p.w_c).all(|w| w.shape() == (8, 8)));
        assert_eq!(p.embeddings[0].shape(), (3, 8));
        assert_eq!(p.embeddings[2].shape(), (5, 8));
    }

    #[test]
    fn glorot_bound_respected() {
        let p: ModelParams<f64> = init_params(&config(), 9).unwrap();
        let s = (6.0f64 / 16.0).sqrt();
        assert!(p.w_q.data.iter().all(|v| v.abs() < s));
    }

    #[test]
    fn rejects_degenerate_dims() {
        let mut c = config();
        c.heads = 0;
        assert!(init_params::<f64>(&c, 0).is_err());
        let mut c = config();
        c.dim = 0;
        assert!(init_params::<f64>(&c, 0).is_err());
    }

    #[test]
    fn zip_visits_all_tensors() {
        let p: ModelParams<f64> = init_params(&config(), 1).unwrap();
        let mut z = p.zeros_like();
        let mut count = 0;
        z.zip_mut(&p, |_, a, b| {
            a.add_assign(b);
            count += 1;
        })
        .unwrap();
        assert_eq!(z, p);
        let mut names = 0;
        p.for_each(|_, _| names += 1);
        assert_eq!(count, names);
    }
}
