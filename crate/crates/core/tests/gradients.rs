mod oracles;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snam_core::model::{build_lasso_model, build_rf_snam, build_snam};
use snam_core::{AdditiveModel, LayerSpec, LossKind, Task};

fn architectures() -> Vec<Vec<LayerSpec>> {
    vec![
        vec![LayerSpec::relu(1)],
        vec![LayerSpec::relu(7)],
        vec![LayerSpec::identity(3)],
        vec![LayerSpec::relu(6), LayerSpec::relu(4)],
        vec![LayerSpec::relu(5), LayerSpec::identity(3)],
        vec![LayerSpec::relu(4), LayerSpec::relu(4), LayerSpec::relu(3)],
    ]
}

fn sample(rng: &mut ChaCha8Rng, n: usize, p: usize, task: Task) -> (Array2<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
    let y = Array1::from_shape_fn(n, |_| match task {
        Task::Regression => rng.random_range(-3.0..3.0),
        Task::BinaryClassification => f64::from(rng.random_bool(0.5)),
    });
    (x, y)
}

/// Largest `|a − b| / max(|a|, |b|, 1e-3)` between the analytic gradient and
/// central differences of the loss over all trainable parameters and the bias.
fn max_rel_error(model: &AdditiveModel, x: &Array2<f64>, y: &Array1<f64>, loss: LossKind) -> f64 {
    let (_, grad) = model.loss_and_gradient(x.view(), y.view(), loss).unwrap();
    let base = model.params();
    let theta = base.to_flat().to_vec();
    let mut probe = model.clone();
    let fd = oracles::finite_diff(
        |t| {
            probe.set_params(&base.from_flat_like(Array1::from_vec(t.to_vec()).view())).unwrap();
            probe.loss(x.view(), y.view(), loss).unwrap()
        },
        &theta,
        1e-6,
    );
    grad.to_flat()
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

#[test]
fn backward_matches_finite_differences_across_architectures() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (k, arch) in architectures().iter().enumerate() {
        for task in [Task::Regression, Task::BinaryClassification] {
            let loss = LossKind::for_task(task);
            let p = 3;
            let (x, y) = sample(&mut rng, 9, p, task);
            let mut model = build_snam(p, arch, 100 + k as u64, task).unwrap();
            model.bias = 0.3;
            let err = max_rel_error(&model, &x, &y, loss);
            assert!(err < 1e-5, "arch {k} {task:?}: relative error {err:e}");

            let mut rf = build_rf_snam(p, arch, 200 + k as u64, task).unwrap();
            rf.bias = -0.2;
            let err = max_rel_error(&rf, &x, &y, loss);
            assert!(err < 1e-5, "frozen arch {k} {task:?}: relative error {err:e}");
        }
    }
}

#[test]
fn linear_model_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, y) = sample(&mut rng, 12, 4, Task::Regression);
    let mut model = build_lasso_model(4, Task::Regression).unwrap();
    let params = model.params();
    let moved = params.from_flat_like(Array1::from_vec(vec![0.5, -1.0, 0.0, 2.0, 0.7]).view());
    model.set_params(&moved).unwrap();
    assert!(max_rel_error(&model, &x, &y, LossKind::Mse) < 1e-6);
}

#[test]
fn gradient_has_one_group_per_feature_plus_bias() {
    let model = build_snam(5, &[LayerSpec::relu(4)], 1, Task::Regression).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, y) = sample(&mut rng, 6, 5, Task::Regression);
    let (_, g) = model.loss_and_gradient(x.view(), y.view(), LossKind::Mse).unwrap();
    assert_eq!(g.groups.len(), 5);
    assert_eq!(g.len(), model.num_trainable());
    // d/dβ of ½·mean (h − y)² is mean(h − y).
    let h = model.raw_output(x.view()).unwrap();
    let expected = (&h - &y).mean().unwrap();
    assert!((g.bias - expected).abs() < 1e-12);
}
