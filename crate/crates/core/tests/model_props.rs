use ndarray::{Array1, Array2};
use proptest::prelude::*;
use snam_core::model::{build_rf_snam, build_snam};
use snam_core::{AdditiveModel, LayerSpec, Task};

fn arch() -> Vec<LayerSpec> {
    vec![LayerSpec::relu(6), LayerSpec::relu(3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_is_bias_plus_shape_functions(seed in 0u64..1000, rows in proptest::collection::vec(-3.0f64..3.0, 12)) {
        let mut model = build_snam(3, &arch(), seed, Task::Regression).unwrap();
        model.bias = 0.25;
        let x = Array2::from_shape_vec((4, 3), rows).unwrap();
        let shapes = model.shape_functions(x.view()).unwrap();
        let out = model.raw_output(x.view()).unwrap();
        for i in 0..4 {
            let sum = 0.25 + shapes.row(i).sum();
            prop_assert!((out[i] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn changing_one_feature_moves_one_shape(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let model = build_snam(4, &arch(), seed, Task::Regression).unwrap();
        let x1 = Array2::from_shape_vec((1, 4), vec![0.1, a, -0.4, 1.2]).unwrap();
        let x2 = Array2::from_shape_vec((1, 4), vec![0.1, b, -0.4, 1.2]).unwrap();
        let s1 = model.shape_functions(x1.view()).unwrap();
        let s2 = model.shape_functions(x2.view()).unwrap();
        for j in [0, 2, 3] {
            prop_assert_eq!(s1[[0, j]], s2[[0, j]]);
        }
    }

    #[test]
    fn random_features_output_is_linear_in_weights(seed in 0u64..1000, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let model = build_rf_snam(3, &[LayerSpec::relu(5)], seed, Task::Regression).unwrap();
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - 2.5) * 0.7 + j as f64 * 0.3);
        let base = model.params();
        let other = base.from_flat_like(base.to_flat().mapv(|v| v.sin()).view());
        let combo = base.from_flat_like((base.to_flat() * s + other.to_flat() * t).view());
        let eval = |p: &snam_core::model::ParamSet| {
            let mut m = model.clone();
            m.set_params(p).unwrap();
            m.raw_output(x.view()).unwrap()
        };
        let lhs = eval(&combo);
        let rhs = eval(&base) * s + eval(&other) * t;
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() < 1e-10);
        }
    }
}

fn zero_group(model: &mut AdditiveModel, j: usize) {
    let mut p = model.params();
    p.groups[j] = Array1::zeros(p.groups[j].len());
    model.set_params(&p).unwrap();
}

#[test]
fn parameter_support_is_function_support() {
    let mut model = build_snam(5, &arch(), 3, Task::Regression).unwrap();
    zero_group(&mut model, 1);
    zero_group(&mut model, 4);
    let x = Array2::from_shape_fn((50, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 2.0 - 2.5);
    let shapes = model.shape_functions(x.view()).unwrap();
    let support = model.selected_support(0.0);
    assert_eq!(support.indices, vec![0, 2, 3]);
    for j in 0..5 {
        let nonzero = shapes.column(j).iter().any(|&v| v != 0.0);
        assert_eq!(nonzero, support.contains(j), "feature {j}");
    }
    assert_eq!(model.num_active_params(), 1 + 3 * (model.num_trainable() - 1) / 5);
}

#[test]
fn frozen_model_trains_only_output_weights() {
    let model = build_rf_snam(4, &[LayerSpec::relu(7)], 0, Task::Regression).unwrap();
    assert!(model.is_frozen());
    assert!(model.trainable_groups().iter().all(|g| g.len() == 7));
    let maps = model.feature_maps(Array2::zeros((3, 4)).view()).unwrap();
    assert_eq!(maps.len(), 4);
    assert_eq!(maps[0].dim(), (3, 7));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut model = build_rf_snam(3, &[LayerSpec::relu(4), LayerSpec::relu(2)], 8, Task::BinaryClassification).unwrap();
    model.bias = -1.0 / 3.0;
    model.save(&path).unwrap();
    let back = AdditiveModel::load(&path).unwrap();
    assert_eq!(back, model);
    let x = Array2::from_elem((2, 3), 0.3);
    assert_eq!(back.predict(x.view()).unwrap(), model.predict(x.view()).unwrap());
}
