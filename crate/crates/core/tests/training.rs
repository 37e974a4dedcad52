mod oracles;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use snam_core::data::gen_regression;
use snam_core::model::{build_lasso_model, build_rf_snam, build_snam};
use snam_core::optim::{estimate_lipschitz, train};
use snam_core::{Dataset, LayerSpec, LossKind, OptimizerKind, PenaltySpec, Task, TrainConfig, XDist};

fn lasso_instance(seed: u64) -> (Dataset, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=50);
    let p = rng.random_range(2..=5);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let beta = Array1::from_shape_fn(p, |j| if j % 2 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 });
    let noise = Array1::from_shape_fn(n, |_| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let y = x.dot(&beta) + 1.5 + noise;
    let lam = rng.random_range(0.02..0.4);
    (Dataset::new(x, y, Task::Regression).unwrap(), lam)
}

fn full_batch(optimizer: OptimizerKind, lr: f64, epochs: usize, n: usize) -> TrainConfig {
    TrainConfig {
        optimizer,
        learning_rate: lr,
        epochs,
        batch_size: n,
        shuffle: false,
        ..TrainConfig::default()
    }
}

fn weights(model: &snam_core::AdditiveModel) -> Array1<f64> {
    model.trainable_groups().iter().map(|g| g[0]).collect()
}

#[test]
fn one_proximal_epoch_is_one_ista_step() {
    for seed in 0..5 {
        let (data, lam) = lasso_instance(seed);
        let mut model = build_lasso_model(data.p(), Task::Regression).unwrap();
        let start = Array1::from_shape_fn(data.p() + 1, |k| 0.3 * k as f64 - 0.5);
        model.set_params(&model.params().from_flat_like(start.view())).unwrap();
        let beta0 = weights(&model);
        let eta = 0.05;
        let cfg = full_batch(OptimizerKind::Proxgd, eta, 1, data.n());
        let (fit, _) = train(model.clone(), &data, LossKind::Mse, &PenaltySpec::group_lasso(lam), &cfg).unwrap();
        let (beta1, b1) = oracles::ista_step(data.x.view(), data.y.view(), &beta0, model.bias, lam, eta);
        let got = weights(&fit);
        for (a, b) in got.iter().zip(&beta1) {
            assert!((a - b).abs() < 1e-10, "seed {seed}: {a} vs {b}");
        }
        assert!((fit.bias - b1).abs() < 1e-10);
    }
}

#[test]
fn proximal_descent_matches_coordinate_descent_lasso() {
    for seed in 0..20 {
        let (data, lam) = lasso_instance(100 + seed);
        let model = build_lasso_model(data.p(), Task::Regression).unwrap();
        let l = estimate_lipschitz(&model, &data, LossKind::Mse, true).unwrap();
        let cfg = full_batch(OptimizerKind::Proxgd, 1.0 / l, 20_000, data.n());
        let (fit, _) = train(model, &data, LossKind::Mse, &PenaltySpec::group_lasso(lam), &cfg).unwrap();
        let (beta, b) = oracles::cd_lasso(data.x.view(), data.y.view(), lam, true);
        let got = weights(&fit);
        let gap = got.iter().zip(&beta).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-4, "instance {seed}: ‖β̂ − β_cd‖∞ = {gap:e}");
        assert!((fit.bias - b).abs() <= 1e-4);
        // Coordinates the oracle zeroes are exactly zero, not merely small.
        for (a, c) in got.iter().zip(&beta) {
            if *c == 0.0 {
                assert_eq!(*a, 0.0, "instance {seed}");
            }
        }
    }
}

#[test]
fn fista_reaches_the_same_convex_minimum_from_different_starts() {
    let (data, _) = gen_regression(300, 4, 1.0, XDist::default(), 3).unwrap();
    let penalty = PenaltySpec::group_lasso(0.05);
    let hidden = [LayerSpec::relu(20)];
    let a = build_rf_snam(4, &hidden, 9, Task::Regression).unwrap();
    let mut b = a.clone();
    let shifted = b.params().to_flat().mapv(|v| v + 0.7);
    b.set_params(&b.params().from_flat_like(shifted.view())).unwrap();
    let l = estimate_lipschitz(&a, &data, LossKind::Mse, true).unwrap();
    let cfg = full_batch(OptimizerKind::Fista, 1.0 / l, 20_000, data.n());
    let (_, ha) = train(a, &data, LossKind::Mse, &penalty, &cfg).unwrap();
    let (_, hb) = train(b, &data, LossKind::Mse, &penalty, &cfg).unwrap();
    let oa = *ha.objectives().last().unwrap();
    let ob = *hb.objectives().last().unwrap();
    assert!((oa - ob).abs() <= 1e-6, "{oa} vs {ob}");
}

#[test]
fn full_batch_objective_decreases_on_random_features() {
    let (data, _) = gen_regression(400, 5, 1.0, XDist::default(), 4).unwrap();
    let model = build_rf_snam(5, &[LayerSpec::relu(30)], 4, Task::Regression).unwrap();
    let l = estimate_lipschitz(&model, &data, LossKind::Mse, true).unwrap();
    for optimizer in [OptimizerKind::Proxgd, OptimizerKind::SubgradPlain] {
        let cfg = full_batch(optimizer, 0.9 / l, 300, data.n());
        let (_, h) = train(model.clone(), &data, LossKind::Mse, &PenaltySpec::group_lasso(0.1), &cfg).unwrap();
        let o = h.objectives();
        assert!(o.windows(2).all(|w| w[1] < w[0]), "{optimizer:?} objective increased");
    }
}

#[test]
fn training_is_deterministic_given_the_seed() {
    let (data, _) = gen_regression(200, 4, 1.0, XDist::default(), 1).unwrap();
    let model = build_snam(4, &[LayerSpec::relu(8), LayerSpec::relu(4)], 2, Task::Regression).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    let penalty = PenaltySpec::group_lasso(0.1);
    let (a, ha) = train(model.clone(), &data, LossKind::Mse, &penalty, &cfg).unwrap();
    let (b, hb) = train(model.clone(), &data, LossKind::Mse, &penalty, &cfg).unwrap();
    assert!(ha.same_trajectory(&hb));
    assert_eq!(a.params().to_flat(), b.params().to_flat());

    let other = TrainConfig { seed: 6, ..cfg };
    let (c, _) = train(model, &data, LossKind::Mse, &penalty, &other).unwrap();
    assert_ne!(a.params().to_flat(), c.params().to_flat());
}

#[test]
fn proximal_training_zeroes_null_features_exactly() {
    let (data, truth) = gen_regression(600, 8, 1.0, XDist::default(), 2).unwrap();
    let model = build_snam(8, &[LayerSpec::relu(10)], 3, Task::Regression).unwrap();
    let cfg = TrainConfig {
        learning_rate: 5e-3,
        epochs: 60,
        batch_size: 16,
        seed: 1,
        ..TrainConfig::default()
    };
    let (fit, _) = train(model, &data, LossKind::Mse, &PenaltySpec::group_lasso(0.5), &cfg).unwrap();
    let norms = fit.group_norms();
    for j in 0..8 {
        if !truth.active.contains(&j) {
            assert_eq!(norms[j], 0.0, "feature {j} has norm {}", norms[j]);
        }
    }
    let selected = fit.selected_support(0.0);
    assert!(!selected.is_empty() && selected.indices.iter().all(|j| truth.active.contains(j)));
}

#[test]
fn huge_penalty_kills_every_group() {
    let (data, _) = gen_regression(100, 4, 1.0, XDist::default(), 0).unwrap();
    let model = build_snam(4, &[LayerSpec::relu(5)], 0, Task::Regression).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 100,
        ..TrainConfig::default()
    };
    let (fit, _) = train(model, &data, LossKind::Mse, &PenaltySpec::group_lasso(1e6), &cfg).unwrap();
    assert!(fit.group_norms().iter().all(|&v| v == 0.0));
    assert_eq!(fit.num_active_params(), 1);
}
