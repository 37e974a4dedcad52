//! The reference implementations are validated on closed-form cases before
//! anything is compared against them.

mod oracles;

use ndarray::{array, Array2};
use oracles::*;

#[test]
fn cd_lasso_orthogonal_design_is_soft_threshold() {
    let x = array![[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]];
    let y = array![3.0, -1.0, 0.5, 2.0];
    let lam = 0.3;
    let (beta, b) = cd_lasso(x.view(), y.view(), lam, false);
    for j in 0..2 {
        let z: f64 = x.column(j).dot(&y) / 4.0;
        let expect = z.signum() * (z.abs() - lam).max(0.0);
        assert!((beta[j] - expect).abs() < 1e-14);
    }
    assert_eq!(b, 0.0);
    // Mean-zero columns: the intercept is the mean response.
    let (beta_i, b_i) = cd_lasso(x.view(), y.view(), lam, true);
    assert!((b_i - 1.125).abs() < 1e-12);
    assert!((&beta_i - &beta).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn ista_fixed_point_is_cd_solution() {
    let x = array![[1.0, 0.3, -0.2], [0.2, 1.1, 0.4], [-0.7, 0.5, 1.0], [0.9, -0.4, 0.3], [0.1, 0.2, -1.2]];
    let y = array![1.0, -0.5, 2.0, 0.3, -1.0];
    let (beta, b) = cd_lasso(x.view(), y.view(), 0.1, true);
    let (next, nb) = ista_step(x.view(), y.view(), &beta, b, 0.1, 0.2);
    assert!((&next - &beta).iter().all(|v| v.abs() < 1e-12));
    assert!((nb - b).abs() < 1e-12);
}

#[test]
fn brute_sorted_l1_reductions() {
    assert_eq!(brute_sorted_l1(&[2.0], &[0.5]), vec![1.5]);
    assert_eq!(brute_sorted_l1(&[0.2], &[0.5]), vec![0.0]);
    let v = [1.0, 3.0, 0.5];
    let same = brute_sorted_l1(&v, &[0.0, 0.0, 0.0]);
    assert!(same.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-15));
    let flat = brute_sorted_l1(&v, &[0.7, 0.7, 0.7]);
    for (u, x) in flat.iter().zip(&v) {
        assert!((u - (x - 0.7f64).max(0.0)).abs() < 1e-14);
    }
    // Crossing after the shift forces a pooled value (3 − 1 + 2.9 − 0.2)/2.
    let pooled = brute_sorted_l1(&[3.0, 2.9], &[1.0, 0.2]);
    assert!(pooled.iter().all(|u| (u - 2.35).abs() < 1e-14));
}

#[test]
fn finite_diff_on_quadratic() {
    let g = finite_diff(|t| t[0] * t[0] + 3.0 * t[0] * t[1], &[1.0, 2.0], 1e-5);
    assert!((g[0] - 8.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
}

#[test]
fn svd_incoherence_hand_cases() {
    let gs = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
    let orth = array![[0.0], [0.0], [5.0]];
    assert!((svd_incoherence(&[gs.clone(), orth], &[0]) - 1.0).abs() < 1e-14);
    // G_j = 2·(first column of G_S): the coefficient matrix is (2, 0)ᵀ.
    let copy = array![[2.0], [0.0], [0.0]];
    assert!((svd_incoherence(&[gs, copy], &[0]) + 1.0).abs() < 1e-12);
}

#[test]
fn naive_threshold_example() {
    let gs = array![[1.0], [0.0]];
    let ones = Array2::from_elem((2, 2), 1.0);
    assert_eq!(naive_threshold(&[gs, ones], &[0], &[1.0, -2.0], 0.5), 8.0);
}
