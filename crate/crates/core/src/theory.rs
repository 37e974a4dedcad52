//! Numerical checks of the random-feature guarantees: mutual incoherence of
//! the feature maps, the support-recovery λ threshold, the slow-rate bound on
//! estimation error and the overfitting assumption behind it.
//!
//! All quantities refer to the sum-of-squares objective `½‖y − Σ G_j θ_j‖² +
//! λ Σ ‖θ_j‖₂` without intercept. Training minimizes the mean loss, so a
//! theory-scale `λ` corresponds to `λ / n` in [`crate::PenaltySpec`].

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TruthModel};
use crate::error::{Result, SnamError};
use crate::linalg::{power_iteration, spd_extreme_eigenvalues, Cholesky};
use crate::model::AdditiveModel;

/// Largest tolerated condition number of `G_S`.
pub const MAX_CONDITION: f64 = 1e12;

fn support_matrix(blocks: &[Array2<f64>], support: &[usize]) -> Result<Array2<f64>> {
    if support.is_empty() {
        return Err(SnamError::Config("the true support must be non-empty".into()));
    }
    if let Some(&j) = support.iter().find(|&&j| j >= blocks.len()) {
        return Err(SnamError::Config(format!("support index {j} out of range for {} blocks", blocks.len())));
    }
    let n = blocks[support[0]].nrows();
    if blocks.iter().any(|b| b.nrows() != n) {
        return Err(SnamError::Shape("feature-map blocks differ in row count".into()));
    }
    let views: Vec<_> = support.iter().map(|&j| blocks[j].view()).collect();
    concatenate(Axis(1), &views).map_err(|e| SnamError::Shape(e.to_string()))
}

/// `γ = 1 − max_{j∉S} ‖(G_SᵀG_S)⁻¹ G_Sᵀ G_j‖₂`. A value `≤ 0` means the
/// incoherence assumption fails on this instance.
pub fn mutual_incoherence(blocks: &[Array2<f64>], support: &[usize]) -> Result<f64> {
    let gs = support_matrix(blocks, support)?;
    let gram = gs.t().dot(&gs);
    let chol = Cholesky::factor(gram.view())
        .map_err(|e| SnamError::Singular(format!("G_S is rank deficient: {e}")))?;
    let (lo, hi) = spd_extreme_eigenvalues(gram.view(), &chol);
    let cond = (hi / lo).sqrt();
    if !(cond <= MAX_CONDITION) {
        return Err(SnamError::Singular(format!("G_S condition number {cond:e} exceeds {MAX_CONDITION:e}")));
    }
    let mut worst = 0.0f64;
    for (j, block) in blocks.iter().enumerate() {
        if support.contains(&j) {
            continue;
        }
        let a = chol.solve(gs.t().dot(block).view());
        let top = power_iteration(a.ncols(), |v| a.t().dot(&a.dot(&v)), 1e-12, 100_000);
        worst = worst.max(top.max(0.0).sqrt());
    }
    Ok(1.0 - worst)
}

/// `max_{j∉S} ‖G_jᵀ‖_∞ · ‖y‖_∞ / γ`, where `‖G_jᵀ‖_∞` is the largest absolute
/// row sum of `G_j`.
pub fn support_lambda_threshold(blocks: &[Array2<f64>], support: &[usize], y: ArrayView1<f64>, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(SnamError::AssumptionViolated(format!(
            "mutual incoherence needs γ > 0, got {gamma}"
        )));
    }
    let y_max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g_max = blocks
        .iter()
        .enumerate()
        .filter(|(j, _)| !support.contains(j))
        .flat_map(|(_, b)| b.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);
    Ok(g_max * y_max / gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// Sub-Gaussian feature maps: `√(2 log(m_j/δ₁))`.
    Subgaussian,
    /// Finite second moments only: `√(m_j/δ₁)`.
    FiniteVariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowRateInputs {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub c_bounds: Vec<f64>,
    pub m_widths: Vec<usize>,
    pub g_second_moments: Vec<f64>,
}

/// `(2σ/√n)·(Σ_j c_j/√δ₂ + μ·max_j √(E g_j²)·r(m_j, δ₁))` with `r` chosen by `variant`.
pub fn slow_rate_bound(inp: &SlowRateInputs, variant: BoundVariant) -> Result<f64> {
    let in_unit = |d: f64| d > 0.0 && d < 1.0;
    if !in_unit(inp.delta1) || !in_unit(inp.delta2) {
        return Err(SnamError::Config(format!(
            "δ₁ and δ₂ must lie in (0, 1), got {} and {}",
            inp.delta1, inp.delta2
        )));
    }
    if inp.n == 0 {
        return Err(SnamError::Config("slow-rate bound needs n ≥ 1".into()));
    }
    if inp.m_widths.len() != inp.g_second_moments.len() {
        return Err(SnamError::Shape("one width and one second moment per feature".into()));
    }
    let c_term = inp.c_bounds.iter().sum::<f64>() / inp.delta2.sqrt();
    let tail = inp
        .m_widths
        .iter()
        .zip(&inp.g_second_moments)
        .map(|(&m, &g2)| {
            let r = match variant {
                BoundVariant::Subgaussian => (2.0 * (m as f64 / inp.delta1).ln()).sqrt(),
                BoundVariant::FiniteVariance => (m as f64 / inp.delta1).sqrt(),
            };
            g2.sqrt() * r
        })
        .fold(0.0f64, f64::max);
    Ok(2.0 * inp.sigma / (inp.n as f64).sqrt() * (c_term + inp.mu * tail))
}

/// Whether the fit is at least as close to `y` as the truth is.
pub fn overfitting_check(model_mse_on_y: f64, noise_mse: f64) -> bool {
    model_mse_on_y <= noise_mse
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub n: usize,
    pub support: Vec<usize>,
    /// Absent when `G_S` is rank deficient; see `incoherence_error`.
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub incoherence_error: Option<String>,
    /// Absent unless `γ > 0`.
    pub lambda_threshold: Option<f64>,
    pub slow_rate_bound: f64,
    pub slow_rate_bound_finite_variance: f64,
    pub mu: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub c_bounds: Vec<f64>,
    pub sigma: f64,
    pub m_widths: Vec<usize>,
    pub g_second_moments: Vec<f64>,
    /// `(1/n)‖Σ_j f_j − ĥ‖²` on the training sample.
    pub empirical_mse: f64,
    pub train_mse: f64,
    pub noise_mse: f64,
    pub overfitting_holds: bool,
    pub bound_holds: bool,
}

/// Evaluate every theory quantity for a random-feature model fitted on
/// `data`, which was generated from `truth`.
pub fn theory_report(model: &AdditiveModel, data: &Dataset, truth: &TruthModel, delta1: f64, delta2: f64) -> Result<TheoryReport> {
    if !model.is_frozen() {
        return Err(SnamError::Unsupported(
            "theory checks need a random-feature model with frozen hidden layers".into(),
        ));
    }
    if truth.p != data.p() || model.p() != data.p() {
        return Err(SnamError::Shape("model, data and truth disagree on the feature count".into()));
    }
    let x = data.x.view();
    let blocks = model.feature_maps(x)?;
    let support: Vec<usize> = truth.active.iter().copied().filter(|&j| j < data.p()).collect();
    let (gamma, incoherence_error) = match mutual_incoherence(&blocks, &support) {
        Ok(g) => (Some(g), None),
        Err(e @ SnamError::Singular(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let lambda_threshold = match gamma {
        Some(g) if g > 0.0 => Some(support_lambda_threshold(&blocks, &support, data.y.view(), g)?),
        _ => None,
    };

    let effects = truth.true_effects(x);
    let c_bounds: Vec<f64> = effects
        .columns()
        .into_iter()
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let g_second_moments: Vec<f64> = blocks.iter().map(|g| g.mapv(|v| v * v).mean().unwrap_or(0.0)).collect();
    let m_widths: Vec<usize> = blocks.iter().map(|g| g.ncols()).collect();
    let mu: f64 = model.group_norms().iter().sum();

    let signal = effects.sum_axis(Axis(1));
    let fitted = model.raw_output(x)?;
    let mean_sq = |a: &Array1<f64>, b: &Array1<f64>| (a - b).mapv(|v| v * v).mean().unwrap_or(0.0);
    let empirical_mse = mean_sq(&signal, &fitted);
    let train_mse = mean_sq(&data.y, &fitted);
    let noise_mse = mean_sq(&data.y, &signal);

    let inputs = SlowRateInputs {
        mu,
        sigma: truth.noise_sigma,
        n: data.n(),
        delta1,
        delta2,
        c_bounds: c_bounds.clone(),
        m_widths: m_widths.clone(),
        g_second_moments: g_second_moments.clone(),
    };
    let bound = slow_rate_bound(&inputs, BoundVariant::Subgaussian)?;
    Ok(TheoryReport {
        n: data.n(),
        support,
        gamma,
        incoherence_error,
        lambda_threshold,
        slow_rate_bound: bound,
        slow_rate_bound_finite_variance: slow_rate_bound(&inputs, BoundVariant::FiniteVariance)?,
        mu,
        delta1,
        delta2,
        c_bounds,
        sigma: truth.noise_sigma,
        m_widths,
        g_second_moments,
        empirical_mse,
        train_mse,
        noise_mse,
        overfitting_holds: overfitting_check(train_mse, noise_mse),
        bound_holds: empirical_mse <= bound,
    })
}
