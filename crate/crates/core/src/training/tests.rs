use super::*;
use crate::click::ImpressionRecord;
use crate::data::FeatureKind;
use crate::model::{init_params, predict_observation, ModelConfig, ModelParams, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn slots() -> Vec<FeatureKind> {
    vec![
        FeatureKind::Categorical { vocab: 3 },
        FeatureKind::Real,
        FeatureKind::Categorical { vocab: 4 },
        FeatureKind::Categorical { vocab: 5 },
    ]
}

fn random_model(seed: u64, variant: Variant) -> ModelParams<f64> {
    let mut cfg = ModelConfig::new(slots(), 4, 2);
    cfg.variant = variant;
    let mut p = init_params(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    p.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8)));
    p
}

fn records(seed: u64, n: usize) -> Vec<ImpressionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let observed = rng.random_bool(0.6);
            let clicked = observed && rng.random_bool(0.5);
            let position = i % 5 + 1;
            ImpressionRecord {
                query_id: (i / 5) as u64,
                doc_id: i as u64,
                position,
                observed,
                clicked,
                features: vec![
                    rng.random_range(0..3) as f64,
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0..4) as f64,
                    (position - 1) as f64,
                ],
                propensity: Some(1.0 / position as f64),
            }
        })
        .collect()
}

fn config(eta: f64, supervision: bool) -> TrainConfig {
    TrainConfig {
        eta,
        observation_supervision: supervision,
        ..TrainConfig::default()
    }
}

/// Largest relative disagreement between analytic and central-difference
/// gradients over every scalar parameter.
fn fd_check(p: &ModelParams<f64>, batch: &[Example], cfg: &TrainConfig) -> f64 {
    let g = grad(p, batch, cfg).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n_tensors = p.tensors().len();
    for ti in 0..n_tensors {
        for k in 0..p.tensors()[ti].1.data.len() {
            let mut plus = p.clone();
            plus.tensors_mut()[ti].1.data[k] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[ti].1.data[k] -= h;
            let num = (total_loss(&plus, batch, cfg).unwrap().total - total_loss(&minus, batch, cfg).unwrap().total)
                / (2.0 * h);
            let ana = g.tensors()[ti].1.data[k];
            worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-4));
        }
    }
    worst
}

fn far_from_threshold(p: &ModelParams<f64>, batch: &[Example]) -> bool {
    batch
        .iter()
        .all(|e| (predict_observation(p, &e.features).unwrap() - 0.5).abs() > 1e-3)
}

#[test]
fn bce_examples() {
    assert!(bce_loss(1.0 - 1e-6, true) < 1.1e-6);
    assert!((bce_loss(0.5, false) - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(bce_loss(0.5, true), bce_loss(0.5, false));
    assert!(bce_loss(0.0f64, true).is_finite());
}

#[test]
fn gradient_matches_finite_differences() {
    let batch = aggregate_impressions(&records(1, 8)).unwrap();
    assert_eq!(batch.len(), 8);
    for (seed, variant, eta, sup) in [
        (3, Variant::Factorized, 0.5, false),
        (4, Variant::Factorized, 1.0, true),
        (5, Variant::Factorized, 0.0, false),
        (6, Variant::Single, 0.5, false),
    ] {
        let p = random_model(seed, variant);
        if variant == Variant::Factorized {
            assert!(far_from_threshold(&p, &batch));
        }
        let err = fd_check(&p, &batch, &config(eta, sup));
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn loss_components() {
    let batch = aggregate_impressions(&records(2, 10)).unwrap();
    let p = random_model(7, Variant::Factorized);
    let a = total_loss(&p, &batch, &config(0.0, false)).unwrap();
    assert!((a.total - (a.l + a.l2)).abs() < 1e-12);
    assert!(a.i > 0.0);
    let b = total_loss(&p, &batch, &config(0.5, false)).unwrap();
    assert!((b.total - (b.l + 0.5 * b.i + b.l2)).abs() < 1e-12);
    let mut c2 = config(0.5, false);
    c2.l2_weight = 0.02;
    let c = total_loss(&p, &batch, &c2).unwrap();
    assert!((c.l2 - 2.0 * b.l2).abs() < 1e-12);
    assert!(total_loss(&p, &[], &config(0.5, false)).is_err());
}

#[test]
fn tied_heads_have_no_information_term() {
    let batch = aggregate_impressions(&records(3, 10)).unwrap();
    let mut p = random_model(8, Variant::Factorized);
    let row = p.obs_token.row(0).to_vec();
    p.obs_token.row_mut(1).copy_from_slice(&row);
    let with = total_loss(&p, &batch, &config(1.0, false)).unwrap();
    assert_eq!(with.i, 0.0);
    let g1 = grad(&p, &batch, &config(1.0, false)).unwrap();
    let g0 = grad(&p, &batch, &config(0.0, false)).unwrap();
    assert_eq!(g1, g0);
}

#[test]
fn records_and_examples_agree() {
    let recs = records(4, 12);
    let mut doubled = recs.clone();
    doubled.extend(recs.iter().cloned());
    let p = random_model(9, Variant::Factorized);
    let a = total_loss(&p, &aggregate_impressions(&recs).unwrap(), &config(0.5, false)).unwrap();
    let b = total_loss(&p, &aggregate_impressions(&doubled).unwrap(), &config(0.5, false)).unwrap();
    assert!((a.total - b.total).abs() < 1e-12);
}

#[test]
fn adam_contract() {
    let p = random_model(10, Variant::Factorized);
    let mut q = p.clone();
    let mut st = OptimizerState::new(&q);
    adam_step(&mut q, &p.zeros_like(), &mut st, 0.001).unwrap();
    assert_eq!(q, p);

    let batch = aggregate_impressions(&records(5, 8)).unwrap();
    let g = grad(&p, &batch, &config(0.5, false)).unwrap();
    let mut q = p.clone();
    let mut st = OptimizerState::new(&q);
    adam_step(&mut q, &g, &mut st, 0.001).unwrap();
    for ((_, a), ((_, b), (_, gt))) in p.tensors().into_iter().zip(q.tensors().into_iter().zip(g.tensors())) {
        for ((&x, &y), &gi) in a.data.iter().zip(&b.data).zip(&gt.data) {
            if gi.abs() > 1e-6 {
                assert!(((x - y) - 0.001 * gi.signum()).abs() < 1e-5);
            }
        }
    }
    let mut r = p.clone();
    let mut st2 = OptimizerState::new(&r);
    adam_step(&mut r, &g, &mut st2, 0.001).unwrap();
    assert_eq!(q, r);
    assert!(adam_step(&mut r, &g, &mut st2, 0.0).is_err());
}

#[test]
fn full_batch_steps_halve_the_objective() {
    let batch = aggregate_impressions(&records(6, 8)).unwrap();
    let mut p: ModelParams<f64> = init_params(&ModelConfig::new(slots(), 4, 2), 11).unwrap();
    let cfg = config(0.5, false);
    let start = total_loss(&p, &batch, &cfg).unwrap().total;
    let mut st = OptimizerState::new(&p);
    for _ in 0..50 {
        let g = grad(&p, &batch, &cfg).unwrap();
        adam_step(&mut p, &g, &mut st, 0.05).unwrap();
    }
    let end = total_loss(&p, &batch, &cfg).unwrap().total;
    assert!(end <= 0.5 * start, "{start} -> {end}");
}

#[test]
fn training_is_deterministic_and_respects_max_epochs() {
    let ex = aggregate_impressions(&records(7, 60)).unwrap();
    let val_ex = aggregate_impressions(&records(8, 20)).unwrap();
    let val = Validation {
        examples: &val_ex,
        dataset: None,
    };
    let model = ModelConfig::new(slots(), 4, 1);
    let mut cfg = config(0.5, false);
    cfg.max_epochs = 3;
    cfg.batch_size = 16;
    let a = train_inforank::<f64>(&model, &ex, &val, &cfg).unwrap();
    let b = train_inforank::<f64>(&model, &ex, &val, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert_eq!(a.history.epochs.len(), 4);
    assert!(a
        .history
        .to_csv()
        .starts_with("epoch,L,I,L2,total,val_total,val_ndcg10,val_delta_ci\n"));

    cfg.max_epochs = 0;
    let z = train_inforank::<f64>(&model, &ex, &val, &cfg).unwrap();
    assert_eq!(z.params, init_params(&model, cfg.seed).unwrap());
    assert_eq!(z.history.epochs.len(), 1);

    assert!(train_click_baseline::<f64>(&model, &ex, &val, &cfg).is_err());
    assert!(train_inforank::<f64>(&model, &[], &val, &cfg).is_err());
}

#[test]
fn ipw_trainer_needs_propensities() {
    let mut recs = records(9, 10);
    let mut model = ModelConfig::new(slots(), 4, 1);
    model.variant = Variant::Single;
    let mut cfg = config(0.0, false);
    cfg.max_epochs = 1;
    let ex = aggregate_impressions(&recs).unwrap();
    assert!(train_ipw::<f64>(&model, &ex, &Validation::default(), &cfg).is_ok());
    recs[0].propensity = None;
    let ex = aggregate_impressions(&recs).unwrap();
    assert!(train_ipw::<f64>(&model, &ex, &Validation::default(), &cfg).is_err());
}
