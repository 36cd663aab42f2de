use inforank::click::{ClickModel, PbmParams};
use inforank::data::{binarize_relevance, filter_dataset, generate_synthetic, FeatureKind, SynthConfig};
use inforank::eval::order_by_score;
use inforank::model::{
    estimate_observation_label, forward, heads, init_params, marginal_relevance, predict_observation,
    predict_relevance, Head, ModelConfig, ModelParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn slots() -> Vec<FeatureKind> {
    vec![
        FeatureKind::Categorical { vocab: 4 },
        FeatureKind::Real,
        FeatureKind::Real,
        FeatureKind::Categorical { vocab: 6 },
    ]
}

fn random_model(seed: u64, scale: f64) -> ModelParams<f64> {
    let mut p = init_params(&ModelConfig::new(slots(), 4, 2), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    p.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale)));
    p
}

fn input(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![
        rng.random_range(0..4) as f64,
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(0..6) as f64,
    ]
}

fn small_synth() -> SynthConfig {
    SynthConfig {
        n_queries: 30,
        docs_per_query: 8,
        n_items: 80,
        ..SynthConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binarization_is_monotone(y_max in 1u32..8, eps in 0.0f64..0.99) {
        let ps: Vec<f64> = (0..=y_max).map(|y| binarize_relevance(y, y_max, eps).unwrap().get()).collect();
        prop_assert!(ps.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(ps[0], eps);
        prop_assert!((ps[y_max as usize] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn filtering_is_idempotent(seed in 0u64..1000, max_len in 1usize..12) {
        let ds = generate_synthetic(&small_synth(), seed).unwrap();
        let once = filter_dataset(&ds, max_len);
        prop_assert_eq!(filter_dataset(&once, max_len), once);
    }

    #[test]
    fn head_outputs_and_attention_rows(seed in 0u64..500) {
        let p = random_model(seed, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let x = input(&mut rng);
            let h = heads::<f64>(&p, &x).unwrap();
            for v in [h.p_r_given_o1, h.p_r_given_o0, h.p_o1] {
                prop_assert!(v > 0.0 && v < 1.0);
            }
            let two_term = predict_relevance::<f64>(&p, &x, 1).unwrap() * predict_observation::<f64>(&p, &x).unwrap()
                + predict_relevance::<f64>(&p, &x, 0).unwrap() * (1.0 - predict_observation::<f64>(&p, &x).unwrap());
            prop_assert!((marginal_relevance::<f64>(&p, &x).unwrap() - two_term).abs() <= 1e-12);
            let t = forward::<f64>(&p, &x, Head::Relevance, Some(1)).unwrap();
            for a in &t.encoder.alpha {
                for i in 0..a.rows {
                    prop_assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn ranking_ignores_monotone_transforms(scores in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
        let ds = generate_synthetic(&SynthConfig { n_queries: 1, docs_per_query: scores.len(), ..small_synth() }, 1).unwrap();
        let docs = &ds.groups[0].documents;
        let moved: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
        prop_assert_eq!(order_by_score(&scores, docs), order_by_score(&moved, docs));
    }

    #[test]
    fn simulators_are_pure_and_consistent(seed in 0u64..1000, rel in proptest::collection::vec(0.0f64..1.0, 1..20)) {
        for model in [
            ClickModel::Pbm(PbmParams::with_len(20)),
            ClickModel::Ubm(inforank::click::UbmParams::with_len(20)),
            ClickModel::Ccm(inforank::click::CcmParams::navigational()),
        ] {
            let a = model.browse(&rel, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = model.browse(&rel, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.iter().all(|s| !s.clicked || s.observed));
            if let ClickModel::Ccm(_) = model {
                prop_assert!(a.windows(2).all(|w| w[0].observed || !w[1].observed));
            }
        }
    }
}

#[test]
fn synthetic_generation_is_pure() {
    let c = small_synth();
    assert_eq!(generate_synthetic(&c, 9).unwrap(), generate_synthetic(&c, 9).unwrap());
    assert_ne!(generate_synthetic(&c, 9).unwrap(), generate_synthetic(&c, 10).unwrap());
}

#[test]
fn pbm_positions_are_independent() {
    let model = ClickModel::Pbm(PbmParams::with_len(5));
    let rel = [0.9, 0.4, 0.7, 0.2, 0.6];
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sum = [0.0f64; 5];
    let mut prod = [[0.0f64; 5]; 5];
    for _ in 0..n {
        let s = model.browse(&rel, &mut rng).unwrap();
        let c: Vec<f64> = s.iter().map(|i| f64::from(u8::from(i.clicked))).collect();
        for i in 0..5 {
            sum[i] += c[i];
            for j in 0..5 {
                prod[i][j] += c[i] * c[j];
            }
        }
    }
    let nf = n as f64;
    for i in 0..5 {
        for j in 0..5 {
            if i == j {
                continue;
            }
            let (mi, mj) = (sum[i] / nf, sum[j] / nf);
            let cov = prod[i][j] / nf - mi * mj;
            let se = (mi * (1.0 - mi) * mj * (1.0 - mj) / nf).sqrt();
            assert!(cov.abs() < 4.0 * se, "cov({i},{j}) = {cov}, se {se}");
        }
    }
}

/// Moving only the observation head, without flipping any estimated label,
/// leaves the relevance-head predictions untouched.
#[test]
fn observation_labels_are_stop_gradient() {
    let p = random_model(3, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<Vec<f64>> = (0..40).map(|_| input(&mut rng)).collect();
    let mut q = p.clone();
    for layer in &mut q.observation_head.layers {
        layer.b.data.iter_mut().for_each(|v| *v += 1e-9);
    }
    let mut moved = 0;
    for x in &xs {
        let (a, b) = (
            predict_observation::<f64>(&p, x).unwrap(),
            predict_observation::<f64>(&q, x).unwrap(),
        );
        if a != b {
            moved += 1;
        }
        let o = estimate_observation_label(&p, x).unwrap();
        assert_eq!(o, estimate_observation_label(&q, x).unwrap());
        assert_eq!(
            predict_relevance::<f64>(&p, x, o).unwrap(),
            predict_relevance::<f64>(&q, x, o).unwrap()
        );
    }
    assert!(moved > 0);
}
