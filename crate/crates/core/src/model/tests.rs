use super::*;
use crate::data::{Document, FeatureKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn slots() -> Vec<FeatureKind> {
    vec![
        FeatureKind::Categorical { vocab: 4 },
        FeatureKind::Real,
        FeatureKind::Categorical { vocab: 3 },
        FeatureKind::Categorical { vocab: 5 },
    ]
}

fn model(seed: u64) -> ModelParams<f64> {
    init_params(&ModelConfig::new(slots(), 6, 2), seed).unwrap()
}

fn randomize(p: &mut ModelParams<f64>, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale)));
}

const X: [f64; 4] = [2.0, -0.7, 1.0, 3.0];

/// Straight-line encoder over nested vectors.
fn encode_oracle(p: &ModelParams<f64>, xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let d = p.config.dim;
    let proj =
        |x: &[f64], w: &Tensor<f64>| -> Vec<f64> { (0..d).map(|c| (0..d).map(|k| x[k] * w.at(k, c)).sum()).collect() };
    let mut mixed = vec![vec![0.0; d]; n];
    for h in 0..p.config.heads {
        for i in 0..n {
            let qi = proj(&xs[i], &p.w_t[h]);
            let beta: Vec<f64> = (0..n)
                .map(|j| {
                    let kj = proj(&xs[j], &p.w_s[h]);
                    (0..d).map(|c| qi[c] * kj[c]).sum::<f64>() / p.config.temperature
                })
                .collect();
            let z: f64 = beta.iter().map(|b| b.exp()).sum();
            for j in 0..n {
                let vj = proj(&xs[j], &p.w_c[h]);
                for c in 0..d {
                    mixed[i][c] += beta[j].exp() / z * vj[c] / p.config.heads as f64;
                }
            }
        }
    }
    let mut out = vec![0.0; d];
    for m in &mixed {
        let omega: Vec<f64> = (0..d)
            .map(|r| 1.0 / (1.0 + (-((0..d).map(|c| p.w_q.at(r, c) * m[c]).sum::<f64>() + p.b_q.data[r])).exp()))
            .collect();
        let t: Vec<f64> = (0..d)
            .map(|r| ((0..d).map(|c| p.w_p.at(r, c) * omega[c]).sum::<f64>() + p.b_p.data[r]).tanh())
            .collect();
        for c in 0..d {
            out[c] += (0..d).map(|k| p.w_out.at(k, c) * t[k]).sum::<f64>() / n as f64;
        }
    }
    out
}

#[test]
fn encoder_matches_straight_line_version() {
    let mut p = model(1);
    randomize(&mut p, 2, 0.6);
    let slots = embed_features(&p, &X, Some(1)).unwrap();
    let xs: Vec<Vec<f64>> = (0..slots.rows).map(|i| slots.row(i).to_vec()).collect();
    let (enc, trace) = attention_encode(&p, slots);
    let oracle = encode_oracle(&p, &xs);
    for (a, b) in enc.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    for al in &trace.alpha {
        for i in 0..al.rows {
            assert!((al.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn embedding_contract() {
    let mut p = model(3);
    randomize(&mut p, 4, 1.0);
    let s = embed_features(&p, &X, None).unwrap();
    assert_eq!(s.rows, 4);
    assert_eq!(s.row(0), p.embeddings[0].row(2));
    assert_eq!(s.row(3), p.embeddings[3].row(3));
    let with_token = embed_features(&p, &X, Some(0)).unwrap();
    assert_eq!(with_token.rows, 5);
    assert_eq!(with_token.row(4), p.obs_token.row(0));

    let fresh = model(3);
    let zero = embed_features(&fresh, &[0.0, 0.0, 0.0, 0.0], None).unwrap();
    assert!(zero.row(1).iter().all(|&v| v == 0.0));

    assert!(embed_features(&p, &[4.0, 0.0, 0.0, 0.0], None).is_err());
    assert!(embed_features(&p, &[0.5, 0.0, 0.0, 0.0], None).is_err());
    assert!(embed_features(&p, &[0.0, 0.0, 0.0], None).is_err());
}

#[test]
fn singleton_and_hot_temperature() {
    let mut cfg = ModelConfig::new(vec![FeatureKind::Categorical { vocab: 2 }], 4, 3);
    cfg.use_position = true;
    let mut p: ModelParams<f64> = init_params(&cfg, 0).unwrap();
    randomize(&mut p, 1, 1.0);
    let s = embed_features(&p, &[1.0], None).unwrap();
    let (_, tr) = attention_encode(&p, s);
    assert!(tr.alpha.iter().all(|a| a.data == vec![1.0]));

    let mut p = model(5);
    randomize(&mut p, 6, 1.0);
    p.config.temperature = 1e12;
    let s = embed_features(&p, &X, Some(1)).unwrap();
    let (_, tr) = attention_encode(&p, s);
    for a in &tr.alpha {
        assert!(a.data.iter().all(|&v| (v - 0.2).abs() < 1e-9));
    }
}

#[test]
fn zeroed_heads_give_one_half() {
    let mut p = model(7);
    for mlp in [&mut p.relevance_head, &mut p.observation_head] {
        mlp.layers.iter_mut().for_each(|l| {
            l.w.fill(0.0);
            l.b.fill(0.0);
        });
    }
    assert_eq!(predict_observation(&p, &X).unwrap(), 0.5);
    assert_eq!(predict_relevance(&p, &X, 0).unwrap(), 0.5);
    assert_eq!(predict_relevance(&p, &X, 1).unwrap(), 0.5);
    assert_eq!(estimate_observation_label(&p, &X).unwrap(), 0);
}

#[test]
fn relevance_head_contract() {
    let mut p = model(8);
    randomize(&mut p, 9, 1.0);
    let r0 = predict_relevance(&p, &X, 0).unwrap();
    let r1 = predict_relevance(&p, &X, 1).unwrap();
    assert_ne!(r0, r1);
    assert!(r0 > 0.0 && r0 < 1.0 && r1 > 0.0 && r1 < 1.0);
    assert!(matches!(predict_relevance(&p, &X, 2), Err(Error::Domain(_))));
    assert_eq!(
        predict_observation(&p, &X).unwrap(),
        predict_observation(&p, &X).unwrap()
    );
}

#[test]
fn observation_threshold_is_strict() {
    assert_eq!(observation_label(0.7), 1);
    assert_eq!(observation_label(0.5), 0);
    assert_eq!(observation_label(0.2), 0);
    assert_eq!(observation_label(0.5f32 + f32::EPSILON), 1);
}

#[test]
fn click_and_marginal_compose_heads() {
    let mut p = model(10);
    randomize(&mut p, 11, 1.0);
    let h = heads(&p, &X).unwrap();
    let click = predict_click(&p, &X, 1).unwrap();
    assert_eq!(click, h.p_r_given_o1 * h.p_o1);
    assert!(click <= h.p_r_given_o1.min(h.p_o1));
    let m = marginal_relevance(&p, &X).unwrap();
    let explicit = h.p_r_given_o1 * h.p_o1 + h.p_r_given_o0 * (1.0 - h.p_o1);
    assert!((m - explicit).abs() < 1e-12);
    assert!(m >= h.p_r_given_o1.min(h.p_r_given_o0) && m <= h.p_r_given_o1.max(h.p_r_given_o0));
    assert_eq!(PointwiseHeads::new(0.9, 0.1, 0.5).marginal_relevance(), 0.5);
}

#[test]
fn slot_permutation_leaves_encoding_unchanged() {
    let mut p = model(12);
    randomize(&mut p, 13, 0.8);
    // the position slot stays last so both layouts remain valid
    let order = [2usize, 0, 1, 3];
    let mut q = p.clone();
    q.config.slots = order.iter().map(|&i| p.config.slots[i]).collect();
    q.embeddings = order.iter().map(|&i| p.embeddings[i].clone()).collect();
    let xq: Vec<f64> = order.iter().map(|&i| X[i]).collect();
    let (a, _) = attention_encode(&p, embed_features(&p, &X, Some(1)).unwrap());
    let (b, _) = attention_encode(&q, embed_features(&q, &xq, Some(1)).unwrap());
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-10);
    }
}

fn group(n: usize) -> QueryGroup {
    QueryGroup {
        query_id: 0,
        user_features: vec![1.0],
        documents: (0..n)
            .map(|i| Document {
                doc_id: 10 + i as u64,
                features: vec![-0.5 + i as f64, (i % 3) as f64],
                graded_relevance: 0,
            })
            .collect(),
    }
}

fn group_model(seed: u64) -> ModelParams<f64> {
    let slots = vec![
        FeatureKind::Categorical { vocab: 2 },
        FeatureKind::Real,
        FeatureKind::Categorical { vocab: 3 },
        FeatureKind::Categorical { vocab: 8 },
    ];
    let mut p = init_params(&ModelConfig::new(slots, 4, 1), seed).unwrap();
    randomize(&mut p, seed + 1, 1.0);
    p
}

#[test]
fn ranking_follows_marginals() {
    let p = group_model(20);
    let g = group(5);
    let scores = score_group(&p, &g).unwrap();
    let order = rank_by_relevance(&p, &g).unwrap();
    for w in order.windows(2) {
        assert!(scores[w[0]] >= scores[w[1]]);
    }
    assert_eq!(rank_by_relevance(&p, &group(1)).unwrap(), vec![0]);

    let mut flat = p.clone();
    for mlp in [&mut flat.relevance_head, &mut flat.observation_head] {
        mlp.layers.iter_mut().for_each(|l| l.w.fill(0.0));
    }
    assert_eq!(rank_by_relevance(&flat, &g).unwrap(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn single_variant_has_one_head() {
    let mut p = group_model(30);
    p.config.variant = Variant::Single;
    p.config.use_position = false;
    assert!(predict_observation(&p, &[0.0, 0.0, 0.0, 0.0]).is_err());
    let m = marginal_relevance(&p, &[0.0, 0.3, 1.0, 5.0]).unwrap();
    let same = marginal_relevance(&p, &[0.0, 0.3, 1.0, 0.0]).unwrap();
    assert_eq!(m, same);
}

#[test]
fn backward_matches_central_differences() {
    let mut p = model(40);
    randomize(&mut p, 41, 0.7);
    for (head, tok) in [
        (Head::Relevance, Some(1)),
        (Head::Relevance, Some(0)),
        (Head::Observation, None),
    ] {
        let tr = forward(&p, &X, head, tok).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &X, &tr, 1.0, &mut g);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        for (ti, name) in names.iter().enumerate() {
            let len = p.tensors()[ti].1.data.len();
            for k in 0..len {
                let h = 1e-6;
                let mut plus = p.clone();
                plus.tensors_mut()[ti].1.data[k] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].1.data[k] -= h;
                let fp = forward(&plus, &X, head, tok).unwrap().prob;
                let fm = forward(&minus, &X, head, tok).unwrap().prob;
                let num = (fp - fm) / (2.0 * h);
                let ana = g.tensors()[ti].1.data[k];
                let err = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-4);
                assert!(err < 1e-5, "{head:?} {name}[{k}]: analytic {ana} numeric {num}");
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_and_schema_guard() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mut p = model(50);
    randomize(&mut p, 51, 1.0);
    save_checkpoint(&p, &path).unwrap();
    let back: ModelParams<f64> = load_checkpoint(&path, &slots()).unwrap();
    assert_eq!(back, p);
    let mut other = slots();
    other[1] = FeatureKind::Categorical { vocab: 2 };
    assert!(matches!(load_checkpoint::<f64>(&path, &other), Err(Error::Schema(_))));
    assert_ne!(schema_hash(&slots()), schema_hash(&other));
}

#[test]
fn f32_agrees_with_f64() {
    let mut p = model(60);
    randomize(&mut p, 61, 1.0);
    let q: ModelParams<f32> = p.cast();
    let a = marginal_relevance(&p, &X).unwrap();
    let b = marginal_relevance(&q, &X).unwrap();
    assert!((a - f64::from(b)).abs() < 1e-5);
}
