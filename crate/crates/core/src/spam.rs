//! Sparse additive models fitted by penalized backfitting with a Gaussian
//! Nadaraya–Watson smoother.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Result, SnamError};
use crate::metrics::SupportSet;

/// Beyond this many bandwidths the Gaussian weight is below `e^{-40.5}` of the
/// weight at the centre and does not change a double-precision sum.
const KERNEL_CUTOFF: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bandwidth {
    /// `1.06 · sd(x) · n^{-1/5}` per feature.
    Silverman,
    Fixed { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpamConfig {
    pub lambda: f64,
    pub bandwidth: Bandwidth,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for SpamConfig {
    fn default() -> Self {
        SpamConfig {
            lambda: 0.0,
            bandwidth: Bandwidth::Silverman,
            max_sweeps: 50,
            tol: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpamStatus {
    Converged,
    MaxSweepsReached,
}

impl SpamStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SpamStatus::Converged => "converged",
            SpamStatus::MaxSweepsReached => "max_sweeps_reached",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpamModel {
    /// `f̂_j(X_ij)` on the training points. Not serialized; the knots carry the same values.
    #[serde(skip)]
    pub fitted: Array2<f64>,
    /// Sorted training values of each feature and the fitted function there.
    pub knots: Vec<Vec<f64>>,
    pub knot_values: Vec<Vec<f64>>,
    pub bandwidths: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub status: SpamStatus,
    /// Training MSE after each sweep.
    pub mse_history: Vec<f64>,
}

/// Gaussian-kernel Nadaraya–Watson smooth of `r` against `x`, evaluated at the
/// points of `x`.
pub fn kernel_smooth(x: ArrayView1<f64>, r: ArrayView1<f64>, bandwidth: f64) -> Result<Array1<f64>> {
    let n = x.len();
    if r.len() != n {
        return Err(SnamError::Shape(format!("x has {n} entries, r has {}", r.len())));
    }
    if n < 2 {
        return Err(SnamError::Config("smoothing needs at least two points".into()));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(SnamError::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let rs: Vec<f64> = order.iter().map(|&i| r[i]).collect();
    let fallback = r.sum() / n as f64;
    let reach = KERNEL_CUTOFF * bandwidth;
    let mut out = Array1::zeros(n);
    let mut lo = 0;
    for (pos, &i) in order.iter().enumerate() {
        let xi = xs[pos];
        while xs[lo] < xi - reach {
            lo += 1;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for k in lo..n {
            let u = (xi - xs[k]) / bandwidth;
            if u < -KERNEL_CUTOFF {
                break;
            }
            let w = (-0.5 * u * u).exp();
            num += w * rs[k];
            den += w;
        }
        out[i] = if den > 0.0 && den.is_finite() { num / den } else { fallback };
    }
    Ok(out)
}

pub fn silverman_bandwidth(x: ArrayView1<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    if sd > 0.0 {
        1.06 * sd * n.powf(-0.2)
    } else {
        1.0
    }
}

fn column_rms(v: ArrayView1<f64>) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

/// Backfitting with per-feature soft-thresholding of the smoothed residual:
/// each sweep visits the features in order, smooths the partial residual,
/// scales it by `[1 − λ/ŝ_j]₊` where `ŝ_j` is its root mean square, and
/// re-centres it.
pub fn spam_fit(data: &Dataset, config: &SpamConfig) -> Result<SpamModel> {
    if data.task != Task::Regression {
        return Err(SnamError::Unsupported("SPAM fits regression data only".into()));
    }
    if !(config.lambda >= 0.0) || !(config.tol >= 0.0) {
        return Err(SnamError::Config("SPAM λ and tolerance must be nonnegative".into()));
    }
    let (n, p) = data.x.dim();
    if n < 2 {
        return Err(SnamError::Config("SPAM needs at least two samples".into()));
    }
    let bandwidths: Vec<f64> = (0..p)
        .map(|j| match config.bandwidth {
            Bandwidth::Silverman => Ok(silverman_bandwidth(data.x.column(j))),
            Bandwidth::Fixed { value } if value > 0.0 => Ok(value),
            Bandwidth::Fixed { value } => Err(SnamError::Config(format!("bandwidth must be positive, got {value}"))),
        })
        .collect::<Result<_>>()?;

    let intercept = data.y.sum() / n as f64;
    let yc = &data.y - intercept;
    let mut fitted = Array2::<f64>::zeros((n, p));
    let mut total = Array1::<f64>::zeros(n);
    let mut status = SpamStatus::MaxSweepsReached;
    let mut sweeps = 0;
    let mut mse_history = Vec::new();
    let root_n = (n as f64).sqrt();

    for _ in 0..config.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let old = fitted.column(j).to_owned();
            let residual = &yc - &total + &old;
            let smooth = kernel_smooth(data.x.column(j), residual.view(), bandwidths[j])?;
            let s = column_rms(smooth.view());
            let new = if s > 0.0 && config.lambda < s {
                let mut f = smooth * (1.0 - config.lambda / s);
                let mean = f.sum() / n as f64;
                f -= mean;
                f
            } else {
                Array1::zeros(n)
            };
            let diff = &new - &old;
            max_change = max_change.max(diff.dot(&diff).sqrt() / root_n);
            total += &diff;
            fitted.column_mut(j).assign(&new);
        }
        let resid = &yc - &total;
        mse_history.push(resid.dot(&resid) / n as f64);
        if max_change < config.tol {
            status = SpamStatus::Converged;
            break;
        }
    }

    let mut knots = Vec::with_capacity(p);
    let mut knot_values = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.x.column(j);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        knots.push(order.iter().map(|&i| col[i]).collect());
        knot_values.push(order.iter().map(|&i| fitted[[i, j]]).collect());
    }
    Ok(SpamModel {
        fitted,
        knots,
        knot_values,
        bandwidths,
        intercept,
        sweeps,
        status,
        mse_history,
    })
}

/// Piecewise-linear interpolation through sorted knots, constant outside.
fn interpolate(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let last = knots.len() - 1;
    if x <= knots[0] {
        return values[0];
    }
    if x >= knots[last] {
        return values[last];
    }
    let hi = knots.partition_point(|&k| k <= x);
    let lo = hi - 1;
    let (x0, x1) = (knots[lo], knots[hi]);
    if x1 == x0 {
        return values[lo];
    }
    let t = (x - x0) / (x1 - x0);
    values[lo] + t * (values[hi] - values[lo])
}

impl SpamModel {
    pub fn p(&self) -> usize {
        self.knots.len()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.fitted.columns().into_iter().map(column_rms).collect()
    }

    /// Features whose fitted column is not identically zero.
    pub fn selected_support(&self) -> SupportSet {
        SupportSet::from_norms(&self.column_norms(), 0.0)
    }

    pub fn shape_functions(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.p() {
            return Err(SnamError::Shape(format!("expected {} columns, got {}", self.p(), x.ncols())));
        }
        let mut out = Array2::zeros(x.dim());
        for j in 0..self.p() {
            let (k, v) = (&self.knots[j], &self.knot_values[j]);
            for (o, &xi) in out.column_mut(j).iter_mut().zip(x.column(j)) {
                *o = interpolate(k, v, xi);
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.shape_functions(x)?.sum_axis(Axis(1)) + self.intercept)
    }
}
