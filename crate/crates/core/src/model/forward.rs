//! Forward passes with the bookkeeping needed for exact reverse-mode
//! gradients.
//!
//! Shapes, for `N` slots of width `d` and head `h`:
//! `A = X W_T`, `B = X W_S`, `V = X W_C` (all `N x d`),
//! `alpha = softmax_rows(A B^T / temperature)`,
//! `M = mean_h alpha V`, `omega = sigmoid(M W_q^T + b_q)`,
//! `T = tanh(omega W_p^T + b_p)`, `p = mean_i(T_i) w`.

use super::params::{Mlp, ModelParams, Variant};
use super::tensor::{add_outer, dot, matvec, matvec_t, Tensor};
use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Which sigmoid head finishes a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Relevance,
    Observation,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    pub slots: Tensor<T>,
    pub a: Vec<Tensor<T>>,
    pub b: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub alpha: Vec<Tensor<T>>,
    pub mixed: Tensor<T>,
    pub omega: Tensor<T>,
    pub hidden: Tensor<T>,
    pub pooled: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct MlpTrace<T> {
    /// Input of each layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<T>>,
    pub prob: T,
}

/// All intermediates of one embed-encode-head evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub head: Head,
    pub token: Option<u8>,
    pub encoder: EncoderTrace<T>,
    pub mlp: MlpTrace<T>,
    pub p: Vec<T>,
    pub prob: T,
}

fn check_input<T: Scalar>(params: &ModelParams<T>, x: &[f64]) -> Result<()> {
    let slots = &params.config.slots;
    if x.len() != slots.len() {
        return Err(Error::Schema(format!(
            "feature vector has {} slots, model expects {}",
            x.len(),
            slots.len()
        )));
    }
    Ok(())
}

/// Slot vectors `x_0 .. x_{N-1}`, followed by the observation token when
/// one is given.
pub fn embed_features<T: Scalar>(params: &ModelParams<T>, x: &[f64], token: Option<u8>) -> Result<Tensor<T>> {
    check_input(params, x)?;
    let cfg = &params.config;
    let d = cfg.dim;
    let n_active = cfg.active_slots();
    let n = n_active + usize::from(token.is_some());
    let mut out = Tensor::zeros(n, d);
    for (i, (kind, &v)) in cfg.slots.iter().zip(x).take(n_active).enumerate() {
        let table = &params.embeddings[i];
        match *kind {
            FeatureKind::Categorical { vocab } => {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= vocab {
                    return Err(Error::Domain(format!(
                        "slot {i}: code {v} outside vocabulary of size {vocab}"
                    )));
                }
                out.row_mut(i).copy_from_slice(table.row(v as usize));
            }
            FeatureKind::Real => {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("input slot {i}")));
                }
                let v = T::lit(v);
                for ((o, &w), &b) in out.row_mut(i).iter_mut().zip(table.row(0)).zip(table.row(1)) {
                    *o = v * w + b;
                }
            }
        }
    }
    if let Some(o) = token {
        if o > 1 {
            return Err(Error::Domain(format!("observation value {o} not in {{0, 1}}")));
        }
        out.row_mut(n_active).copy_from_slice(params.obs_token.row(o as usize));
    }
    Ok(out)
}

fn softmax_rows<T: Scalar>(beta: &mut Tensor<T>, temperature: T) {
    for r in 0..beta.rows {
        let row = beta.row_mut(r);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v / temperature));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v / temperature - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Multi-head slot attention pooled into a `d`-dimensional vector.
pub fn attention_encode<T: Scalar>(params: &ModelParams<T>, slots: Tensor<T>) -> (Vec<T>, EncoderTrace<T>) {
    let cfg = &params.config;
    let n = slots.rows;
    let d = cfg.dim;
    let temperature = T::lit(cfg.temperature);
    let inv_heads = T::one() / T::lit(cfg.heads as f64);

    let mut a = Vec::with_capacity(cfg.heads);
    let mut b = Vec::with_capacity(cfg.heads);
    let mut v = Vec::with_capacity(cfg.heads);
    let mut alpha = Vec::with_capacity(cfg.heads);
    let mut mixed = Tensor::zeros(n, d);
    for h in 0..cfg.heads {
        let ah = slots.matmul(&params.w_t[h]);
        let bh = slots.matmul(&params.w_s[h]);
        let vh = slots.matmul(&params.w_c[h]);
        let mut al = ah.matmul_t(&bh);
        softmax_rows(&mut al, temperature);
        let mut ctx = al.matmul(&vh);
        ctx.scale(inv_heads);
        mixed.add_assign(&ctx);
        a.push(ah);
        b.push(bh);
        v.push(vh);
        alpha.push(al);
    }

    let mut omega = mixed.matmul_t(&params.w_q);
    for i in 0..n {
        for (o, &bq) in omega.row_mut(i).iter_mut().zip(&params.b_q.data) {
            *o = sigmoid(*o + bq);
        }
    }
    let mut hidden = omega.matmul_t(&params.w_p);
    for i in 0..n {
        for (t, &bp) in hidden.row_mut(i).iter_mut().zip(&params.b_p.data) {
            *t = (*t + bp).tanh();
        }
    }
    let inv_n = T::one() / T::lit(n as f64);
    let mut pooled = vec![T::zero(); d];
    for i in 0..n {
        for (s, &t) in pooled.iter_mut().zip(hidden.row(i)) {
            *s = *s + t;
        }
    }
    pooled.iter_mut().for_each(|s| *s = *s * inv_n);
    let p = matvec_t(&params.w_out, &pooled);

    (
        p,
        EncoderTrace {
            slots,
            a,
            b,
            v,
            alpha,
            mixed,
            omega,
            hidden,
            pooled,
        },
    )
}

pub(crate) fn mlp_forward<T: Scalar>(mlp: &Mlp<T>, input: &[T]) -> MlpTrace<T> {
    let mut inputs = Vec::with_capacity(mlp.layers.len());
    let mut pre = Vec::with_capacity(mlp.layers.len().saturating_sub(1));
    let mut act = input.to_vec();
    let last = mlp.layers.len() - 1;
    let mut prob = T::zero();
    for (l, layer) in mlp.layers.iter().enumerate() {
        let mut z = matvec(&layer.w, &act);
        for (zi, &bi) in z.iter_mut().zip(&layer.b.data) {
            *zi = *zi + bi;
        }
        inputs.push(std::mem::take(&mut act));
        if l == last {
            prob = sigmoid(z[0]);
        } else {
            act = z.iter().map(|&v| v.max(T::zero())).collect();
            pre.push(z);
        }
    }
    MlpTrace { inputs, pre, prob }
}

/// Accumulates head gradients for `d loss / d prob` and returns `d loss / d input`.
pub(crate) fn mlp_backward<T: Scalar>(mlp: &Mlp<T>, trace: &MlpTrace<T>, dprob: T, grad: &mut Mlp<T>) -> Vec<T> {
    let s = trace.prob;
    let mut dz = vec![dprob * s * (T::one() - s)];
    for l in (0..mlp.layers.len()).rev() {
        let layer = &mlp.layers[l];
        let g = &mut grad.layers[l];
        add_outer(&mut g.w, &dz, &trace.inputs[l]);
        for (gb, &v) in g.b.data.iter_mut().zip(&dz) {
            *gb = *gb + v;
        }
        let din = matvec_t(&layer.w, &dz);
        if l == 0 {
            return din;
        }
        dz = din
            .iter()
            .zip(&trace.pre[l - 1])
            .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
            .collect();
    }
    unreachable!("mlp has at least one layer")
}

/// Backward through the encoder; returns `d loss / d slots`.
fn encoder_backward<T: Scalar>(
    params: &ModelParams<T>,
    tr: &EncoderTrace<T>,
    dp: &[T],
    grad: &mut ModelParams<T>,
) -> Tensor<T> {
    let cfg = &params.config;
    let n = tr.slots.rows;
    let d = cfg.dim;
    let inv_n = T::one() / T::lit(n as f64);
    let inv_heads = T::one() / T::lit(cfg.heads as f64);
    let temperature = T::lit(cfg.temperature);

    // p = pooled w
    add_outer(&mut grad.w_out, &tr.pooled, dp);
    let dpooled = matvec(&params.w_out, dp);

    // hidden = tanh(G)
    let mut dg = Tensor::zeros(n, d);
    for i in 0..n {
        for ((g, &t), &dpl) in dg.row_mut(i).iter_mut().zip(tr.hidden.row(i)).zip(&dpooled) {
            *g = dpl * inv_n * (T::one() - t * t);
        }
    }
    dg.add_t_matmul_into(&tr.omega, &mut grad.w_p);
    for i in 0..n {
        for (gb, &v) in grad.b_p.data.iter_mut().zip(dg.row(i)) {
            *gb = *gb + v;
        }
    }
    let domega = dg.matmul(&params.w_p);

    // omega = sigmoid(Z)
    let mut dz = domega;
    for i in 0..n {
        for (g, &o) in dz.row_mut(i).iter_mut().zip(tr.omega.row(i)) {
            *g = *g * o * (T::one() - o);
        }
    }
    dz.add_t_matmul_into(&tr.mixed, &mut grad.w_q);
    for i in 0..n {
        for (gb, &v) in grad.b_q.data.iter_mut().zip(dz.row(i)) {
            *gb = *gb + v;
        }
    }
    let mut dmixed = dz.matmul(&params.w_q);
    dmixed.scale(inv_heads);

    let mut dslots = Tensor::zeros(n, d);
    for h in 0..cfg.heads {
        let alpha = &tr.alpha[h];
        // mixed += alpha V / H
        let dalpha = dmixed.matmul_t(&tr.v[h]);
        let mut dv = Tensor::zeros(n, d);
        alpha.add_t_matmul_into(&dmixed, &mut dv);
        // softmax rows, then the temperature
        let mut dbeta = Tensor::zeros(n, n);
        for i in 0..n {
            let ar = alpha.row(i);
            let gr = dalpha.row(i);
            let inner = dot(ar, gr);
            for ((o, &a), &g) in dbeta.row_mut(i).iter_mut().zip(ar).zip(gr) {
                *o = a * (g - inner) / temperature;
            }
        }
        // beta = A B^T
        let da = dbeta.matmul(&tr.b[h]);
        let mut db = Tensor::zeros(n, d);
        dbeta.add_t_matmul_into(&tr.a[h], &mut db);

        tr.slots.add_t_matmul_into(&da, &mut grad.w_t[h]);
        tr.slots.add_t_matmul_into(&db, &mut grad.w_s[h]);
        tr.slots.add_t_matmul_into(&dv, &mut grad.w_c[h]);
        dslots.add_assign(&da.matmul_t(&params.w_t[h]));
        dslots.add_assign(&db.matmul_t(&params.w_s[h]));
        dslots.add_assign(&dv.matmul_t(&params.w_c[h]));
    }
    dslots
}

fn embed_backward<T: Scalar>(
    params: &ModelParams<T>,
    x: &[f64],
    token: Option<u8>,
    dslots: &Tensor<T>,
    grad: &mut ModelParams<T>,
) {
    let cfg = &params.config;
    let n_active = cfg.active_slots();
    for (i, (kind, &v)) in cfg.slots.iter().zip(x).take(n_active).enumerate() {
        let g = &mut grad.embeddings[i];
        let ds = dslots.row(i);
        match kind {
            FeatureKind::Categorical { .. } => {
                for (gv, &dv) in g.row_mut(v as usize).iter_mut().zip(ds) {
                    *gv = *gv + dv;
                }
            }
            FeatureKind::Real => {
                let v = T::lit(v);
                for (gv, &dv) in g.row_mut(0).iter_mut().zip(ds) {
                    *gv = *gv + v * dv;
                }
                for (gv, &dv) in g.row_mut(1).iter_mut().zip(ds) {
                    *gv = *gv + dv;
                }
            }
        }
    }
    if let Some(o) = token {
        for (gv, &dv) in grad.obs_token.row_mut(o as usize).iter_mut().zip(dslots.row(n_active)) {
            *gv = *gv + dv;
        }
    }
}

fn head_mlp<T: Scalar>(params: &ModelParams<T>, head: Head) -> &Mlp<T> {
    match head {
        Head::Relevance => &params.relevance_head,
        Head::Observation => &params.observation_head,
    }
}

/// Full evaluation of one head for one feature vector.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    x: &[f64],
    head: Head,
    token: Option<u8>,
) -> Result<ForwardTrace<T>> {
    if params.config.variant == Variant::Single && (head == Head::Observation || token.is_some()) {
        return Err(Error::Config(
            "single-head model has no observation head or token".into(),
        ));
    }
    let slots = embed_features(params, x, token)?;
    let (p, encoder) = attention_encode(params, slots);
    let mlp = mlp_forward(head_mlp(params, head), &p);
    Ok(ForwardTrace {
        head,
        token,
        prob: mlp.prob,
        encoder,
        mlp,
        p,
    })
}

/// Accumulates `dprob * d prob / d theta` into `grad`.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    x: &[f64],
    trace: &ForwardTrace<T>,
    dprob: T,
    grad: &mut ModelParams<T>,
) {
    let head_grad = match trace.head {
        Head::Relevance => &mut grad.relevance_head,
        Head::Observation => &mut grad.observation_head,
    };
    let dp = mlp_backward(head_mlp(params, trace.head), &trace.mlp, dprob, head_grad);
    let dslots = encoder_backward(params, &trace.encoder, &dp, grad);
    embed_backward(params, x, trace.token, &dslots, grad);
}
