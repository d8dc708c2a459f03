use drift_pfn::config::PriorConfig;
use drift_pfn::dataset::Samples;
use drift_pfn::exec::Exec;
use drift_pfn::model::{DomainInput, IclModel, ModelConfig};
use drift_pfn::rng::from_seed;
use drift_pfn::train::{train, TrainConfig};
use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

fn small_config() -> ModelConfig {
    ModelConfig { embed_dim: 16, num_layers: 2, num_heads: 2, ffn_dim: 32, max_features: 4, max_classes: 3, ..Default::default() }
}

fn random_samples(n: usize, d: usize, classes: usize, seed: u64) -> Samples {
    let mut rng = from_seed(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let mut y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    y.shuffle(&mut rng);
    let c = (0..n).map(|i| (i / 4) as f64).collect();
    Samples { x, y, c }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_column_changes_nothing() {
    let model = IclModel::new(small_config(), &mut from_seed(1)).unwrap();
    let ctx = random_samples(20, 2, 3, 2);
    let q = random_samples(7, 2, 3, 3);
    let base = model.predict_proba(&ctx, q.x.view(), &q.c).unwrap();
    let pad = |s: &Samples| {
        let zeros = Array2::zeros((s.len(), 1));
        Samples { x: concatenate(Axis(1), &[s.x.view(), zeros.view()]).unwrap(), ..s.clone() }
    };
    let (ctx2, q2) = (pad(&ctx), pad(&q));
    let padded = model.predict_proba(&ctx2, q2.x.view(), &q2.c).unwrap();
    assert!(max_abs_diff(&base, &padded) < 1e-12);
}

#[test]
fn absent_classes_get_no_mass() {
    let model = IclModel::new(small_config(), &mut from_seed(4)).unwrap();
    let mut ctx = random_samples(12, 2, 2, 5);
    ctx.y.iter_mut().for_each(|y| *y *= 2);
    let q = random_samples(5, 2, 2, 6);
    let p = model.predict_proba(&ctx, q.x.view(), &q.c).unwrap();
    for row in p.rows() {
        assert_eq!(row[1], 0.0);
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn scalar_domain_input_runs() {
    let cfg = ModelConfig { domain_input: DomainInput::Scalar, ..small_config() };
    let model = IclModel::new(cfg, &mut from_seed(7)).unwrap();
    assert!(model.time2vec().is_none());
    let ctx = random_samples(10, 3, 2, 8);
    let p = model.predict_proba(&ctx, ctx.x.view(), &ctx.c).unwrap();
    assert!(p.iter().all(|v| v.is_finite()));
}

#[test]
fn training_lowers_the_loss() {
    let cfg = TrainConfig {
        prior: PriorConfig { feature_count_range: (2, 2), min_classes: 2, max_classes: 2, ..Default::default() },
        model: ModelConfig { max_classes: 2, ..small_config() },
        steps: 500,
        seed: 3,
        optim: drift_pfn::optim::OptimConfig { learning_rate: 1e-3, ..Default::default() },
        ..Default::default()
    };
    let mut losses = Vec::new();
    train(&cfg, Exec::Sequential, |_, l| losses.push(l)).unwrap();
    let head = losses[..50].iter().sum::<f64>() / 50.0;
    let tail = losses[losses.len() - 50..].iter().sum::<f64>() / 50.0;
    assert!(tail < head, "first 50 mean {head}, last 50 mean {tail}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn context_order_does_not_matter(seed in any::<u64>(), n in 3usize..30) {
        let model = IclModel::new(small_config(), &mut from_seed(seed)).unwrap();
        let ctx = random_samples(n, 3, 3, seed ^ 1);
        let q = random_samples(6, 3, 3, seed ^ 2);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut from_seed(seed ^ 3));
        let a = model.predict_proba(&ctx, q.x.view(), &q.c).unwrap();
        let b = model.predict_proba(&ctx.select(&order), q.x.view(), &q.c).unwrap();
        prop_assert!(max_abs_diff(&a, &b) < 1e-5);
    }

    #[test]
    fn queries_do_not_see_each_other(seed in any::<u64>(), extra in 1usize..10) {
        let model = IclModel::new(small_config(), &mut from_seed(seed)).unwrap();
        let ctx = random_samples(15, 2, 3, seed ^ 4);
        let q = random_samples(1, 2, 3, seed ^ 5);
        let others = random_samples(extra, 2, 3, seed ^ 6);
        let alone = model.predict_proba(&ctx, q.x.view(), &q.c).unwrap();
        let both = q.concat(&others);
        let together = model.predict_proba(&ctx, both.x.view(), &both.c).unwrap();
        let first = together.slice(ndarray::s![0..1, ..]).to_owned();
        prop_assert!(max_abs_diff(&alone, &first) < 1e-12);
    }

    #[test]
    fn probabilities_are_distributions(seed in any::<u64>()) {
        let model = IclModel::new(small_config(), &mut from_seed(seed)).unwrap();
        let ctx = random_samples(9, 4, 3, seed ^ 7);
        let p = model.predict_proba(&ctx, ctx.x.view(), &ctx.c).unwrap();
        for row in p.rows() {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
