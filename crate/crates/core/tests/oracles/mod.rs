//! Reference implementations that the library is checked against. They are
//! written from the textbook definitions and share no code with the crate.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `½‖y − Xβ − b‖²/n + λ‖β‖₁` with an
/// unpenalized intercept `b` (kept at 0 when `intercept` is false).
pub fn cd_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, lam: f64, intercept: bool) -> (Array1<f64>, f64) {
    let (n, p) = x.dim();
    let nf = n as f64;
    let mut beta = Array1::<f64>::zeros(p);
    let mut b = 0.0;
    let mut r = y.to_owned();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).dot(&x.column(j)) / nf).collect();
    for _ in 0..200_000 {
        let mut delta = 0.0f64;
        if intercept {
            let shift = r.sum() / nf;
            r -= shift;
            b += shift;
            delta = delta.max(shift.abs());
        }
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = x.column(j).dot(&r) / nf + col_sq[j] * old;
            let new = soft(rho, lam) / col_sq[j];
            if new != old {
                r.scaled_add(old - new, &x.column(j));
                beta[j] = new;
                delta = delta.max((new - old).abs());
            }
        }
        if delta < 1e-15 {
            break;
        }
    }
    (beta, b)
}

/// One ISTA step for the same objective: gradient step on the smooth part,
/// soft-threshold on `β`, plain step on the intercept.
pub fn ista_step(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: &Array1<f64>, b: f64, lam: f64, eta: f64) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let resid = x.dot(beta) + b - &y;
    let grad = x.t().dot(&resid) / n;
    let gb = resid.sum() / n;
    let next = Array1::from_iter(beta.iter().zip(&grad).map(|(v, g)| soft(v - eta * g, eta * lam)));
    (next, b - eta * gb)
}

fn sorted_l1(u: &[f64], lam: &[f64]) -> f64 {
    let mut s: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.iter().zip(lam).map(|(a, l)| a * l).sum()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(k - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

/// Exhaustive search for `argmin_{u ≥ 0} ½‖u − v‖² + Σ lam_j u_(j)`.
///
/// Every minimizer orders the coordinates in some permutation and splits that
/// order into consecutive runs sharing one value (the run mean of `v − lam`,
/// clipped at zero). All such candidates are enumerated and the one with the
/// smallest objective is returned.
pub fn brute_sorted_l1(v: &[f64], lam: &[f64]) -> Vec<f64> {
    let p = v.len();
    let objective = |u: &[f64]| 0.5 * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + sorted_l1(u, lam);
    let mut best = vec![0.0; p];
    let mut best_val = objective(&best);
    for perm in permutations(p) {
        for cuts in 0..(1u32 << p.saturating_sub(1)) {
            let mut u = vec![0.0; p];
            let mut start = 0;
            let mut values = Vec::new();
            for end in 1..=p {
                let boundary = end == p || (cuts >> (end - 1)) & 1 == 1;
                if boundary {
                    let mean = (start..end).map(|k| v[perm[k]] - lam[k]).sum::<f64>() / (end - start) as f64;
                    let val = mean.max(0.0);
                    for k in start..end {
                        u[perm[k]] = val;
                    }
                    values.push(val);
                    start = end;
                }
            }
            if values.windows(2).any(|w| w[0] < w[1]) {
                continue;
            }
            let val = objective(&u);
            if val < best_val {
                best_val = val;
                best = u;
            }
        }
    }
    best
}

/// Central finite-difference gradient of `f` at `theta`.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            t[i] = theta[i] + h;
            let up = f(&t);
            t[i] = theta[i] - h;
            let down = f(&t);
            t[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Incoherence margin through a dense pseudo-inverse and full SVDs.
pub fn svd_incoherence(blocks: &[Array2<f64>], support: &[usize]) -> f64 {
    let n = blocks[0].nrows();
    let width: usize = support.iter().map(|&j| blocks[j].ncols()).sum();
    let mut gs = DMatrix::<f64>::zeros(n, width);
    let mut col = 0;
    for &j in support {
        let b = to_dmatrix(&blocks[j]);
        gs.view_mut((0, col), (n, b.ncols())).copy_from(&b);
        col += b.ncols();
    }
    let pinv = gs.clone().pseudo_inverse(1e-14).unwrap();
    let mut worst = 0.0f64;
    for (j, b) in blocks.iter().enumerate() {
        if support.contains(&j) {
            continue;
        }
        let a = &pinv * to_dmatrix(b);
        let s = a.singular_values();
        worst = worst.max(s.max());
    }
    1.0 - worst
}

/// Support threshold evaluated with explicit loops.
pub fn naive_threshold(blocks: &[Array2<f64>], support: &[usize], y: &[f64], gamma: f64) -> f64 {
    let mut g_max = 0.0f64;
    for (j, b) in blocks.iter().enumerate() {
        if support.contains(&j) {
            continue;
        }
        for i in 0..b.nrows() {
            let mut row = 0.0;
            for k in 0..b.ncols() {
                row += b[[i, k]].abs();
            }
            if row > g_max {
                g_max = row;
            }
        }
    }
    let mut y_max = 0.0f64;
    for &v in y {
        if v.abs() > y_max {
            y_max = v.abs();
        }
    }
    g_max * y_max / gamma
}
