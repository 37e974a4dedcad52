//! Small dense linear-algebra helpers used by the theory checks and the
//! step-size estimate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SnamError};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SnamError::Shape(format!("Cholesky needs a square matrix, got {:?}", a.dim())));
        }
        let mut lower = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= lower[[j, k]] * lower[[j, k]];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(SnamError::Singular(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            lower[[j, j]] = d;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= lower[[i, k]] * lower[[j, k]];
                }
                lower[[i, j]] = s / d;
            }
        }
        Ok(Cholesky { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let l = &self.lower;
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    pub fn solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(b.dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.solve_vec(col));
        }
        out
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration, stopping when the Rayleigh quotient changes by less than
/// `rel_tol` (relative).
pub fn power_iteration<F>(dim: usize, mut apply: F, rel_tol: f64, max_iter: usize) -> f64
where
    F: FnMut(ArrayView1<f64>) -> Array1<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = Array1::from_shape_fn(dim, |i| 1.0 + 0.1 * ((i as f64) * 0.618_033_988_75).fract());
    normalize(&mut v);
    let mut estimate = 0.0f64;
    for _ in 0..max_iter {
        let w = apply(v.view());
        let rayleigh = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (rayleigh - estimate).abs() <= rel_tol * rayleigh.abs();
        estimate = rayleigh;
        v = w / norm;
        if converged {
            break;
        }
    }
    estimate
}

fn normalize(v: &mut Array1<f64>) {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        v.mapv_inplace(|a| a / n);
    }
}

/// Spectral norm `‖A‖₂` via power iteration on `AᵀA`.
pub fn spectral_norm(a: ArrayView2<f64>, rel_tol: f64) -> f64 {
    let lam = power_iteration(a.ncols(), |v| a.t().dot(&a.dot(&v)), rel_tol, 100_000);
    lam.max(0.0).sqrt()
}

/// Smallest and largest eigenvalues of an SPD matrix; the smallest via inverse
/// power iteration on its Cholesky factor.
pub fn spd_extreme_eigenvalues(a: ArrayView2<f64>, chol: &Cholesky) -> (f64, f64) {
    let max = power_iteration(a.nrows(), |v| a.dot(&v), 1e-12, 100_000);
    let inv_max = power_iteration(a.nrows(), |v| chol.solve_vec(v), 1e-12, 100_000);
    let min = if inv_max > 0.0 { 1.0 / inv_max } else { 0.0 };
    (min, max)
}
