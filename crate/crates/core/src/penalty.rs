//! Group-sparsity penalties on sub-network parameter groups.
//!
//! Each variant provides its value and its exact proximal operator; the
//! `‖·‖₂`-based variants also provide a subgradient (with the zero vector
//! chosen at a zero group). The sorted variants act on the vector of group
//! norms through [`sorted_l1_prox`].

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnamError};
use crate::mlp::l2_norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    GroupLasso,
    GroupSlope,
    TwoLevelSlope,
    AdaptiveGroupLasso,
    GroupElasticNet,
}

impl PenaltyKind {
    pub fn is_sorted(self) -> bool {
        matches!(self, PenaltyKind::GroupSlope | PenaltyKind::TwoLevelSlope)
    }
}

/// Penalty variant plus coefficients. Fields a variant does not use are ignored.
///
/// * `lambda`: group lasso and adaptive group lasso
/// * `slope_seq`: group SLOPE, nonincreasing, one entry per group
/// * `levels`, `top_k`: two-level SLOPE: `levels.0` on the `top_k` largest
///   norms, `levels.1` on the rest
/// * `adaptive_weights`: adaptive group lasso, strictly positive
/// * `en_pair`: elastic net `(λ₁, λ₂)` on `λ₁ Σ‖Θ_j‖₂ + λ₂ Σ‖Θ_j‖₂²`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub variant: PenaltyKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slope_seq: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adaptive_weights: Vec<f64>,
    #[serde(default)]
    pub en_pair: (f64, f64),
    #[serde(default)]
    pub levels: (f64, f64),
    #[serde(default)]
    pub top_k: usize,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec::group_lasso(0.0)
    }
}

impl PenaltySpec {
    pub fn group_lasso(lambda: f64) -> Self {
        PenaltySpec {
            variant: PenaltyKind::GroupLasso,
            lambda,
            slope_seq: Vec::new(),
            adaptive_weights: Vec::new(),
            en_pair: (0.0, 0.0),
            levels: (0.0, 0.0),
            top_k: 0,
        }
    }

    pub fn group_slope(slope_seq: Vec<f64>) -> Self {
        PenaltySpec {
            variant: PenaltyKind::GroupSlope,
            slope_seq,
            ..PenaltySpec::group_lasso(0.0)
        }
    }

    pub fn two_level_slope(high: f64, low: f64, top_k: usize) -> Self {
        PenaltySpec {
            variant: PenaltyKind::TwoLevelSlope,
            levels: (high, low),
            top_k,
            ..PenaltySpec::group_lasso(0.0)
        }
    }

    pub fn adaptive(lambda: f64, weights: Vec<f64>) -> Self {
        PenaltySpec {
            variant: PenaltyKind::AdaptiveGroupLasso,
            lambda,
            adaptive_weights: weights,
            ..PenaltySpec::group_lasso(0.0)
        }
    }

    pub fn elastic_net(lambda1: f64, lambda2: f64) -> Self {
        PenaltySpec {
            variant: PenaltyKind::GroupElasticNet,
            en_pair: (lambda1, lambda2),
            ..PenaltySpec::group_lasso(0.0)
        }
    }

    /// Adaptive weights `1/‖Θ_j,ref‖₂` from the group norms of a reference fit.
    /// Groups the reference killed get a weight of `1e12`, which keeps them at zero.
    pub fn adaptive_weights_from_norms(norms: &[f64]) -> Vec<f64> {
        norms
            .iter()
            .map(|&n| if n > 1e-12 { 1.0 / n } else { 1e12 })
            .collect()
    }

    /// True when the penalty is identically zero.
    pub fn is_zero(&self) -> bool {
        match self.variant {
            PenaltyKind::GroupLasso | PenaltyKind::AdaptiveGroupLasso => self.lambda == 0.0,
            PenaltyKind::GroupSlope => self.slope_seq.iter().all(|&l| l == 0.0),
            PenaltyKind::TwoLevelSlope => self.levels == (0.0, 0.0),
            PenaltyKind::GroupElasticNet => self.en_pair == (0.0, 0.0),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SnamError::Config(format!("{name} must be a nonnegative finite number, got {v}")))
            }
        };
        match self.variant {
            PenaltyKind::GroupLasso => nonneg("lambda", self.lambda),
            PenaltyKind::AdaptiveGroupLasso => {
                nonneg("lambda", self.lambda)?;
                if self.adaptive_weights.len() != p {
                    return Err(SnamError::Config(format!(
                        "adaptive_weights has {} entries, expected {p}",
                        self.adaptive_weights.len()
                    )));
                }
                if self.adaptive_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                    return Err(SnamError::Config("adaptive_weights must be strictly positive".into()));
                }
                Ok(())
            }
            PenaltyKind::GroupElasticNet => {
                nonneg("lambda1", self.en_pair.0)?;
                nonneg("lambda2", self.en_pair.1)
            }
            PenaltyKind::GroupSlope => {
                if self.slope_seq.len() != p {
                    return Err(SnamError::Config(format!(
                        "slope_seq has {} entries, expected {p}",
                        self.slope_seq.len()
                    )));
                }
                check_slope_seq(&self.slope_seq)
            }
            PenaltyKind::TwoLevelSlope => {
                nonneg("high level", self.levels.0)?;
                nonneg("low level", self.levels.1)?;
                if self.levels.0 < self.levels.1 {
                    return Err(SnamError::Config(
                        "two-level SLOPE needs the high level ≥ the low level".into(),
                    ));
                }
                if self.top_k > p {
                    return Err(SnamError::Config(format!("top_k = {} exceeds p = {p}", self.top_k)));
                }
                Ok(())
            }
        }
    }

    /// The nonincreasing weight sequence applied to sorted group norms.
    fn sorted_weights(&self, p: usize) -> Vec<f64> {
        match self.variant {
            PenaltyKind::GroupSlope => self.slope_seq.clone(),
            PenaltyKind::TwoLevelSlope => (0..p)
                .map(|k| if k < self.top_k { self.levels.0 } else { self.levels.1 })
                .collect(),
            _ => unreachable!("only sorted variants have a weight sequence"),
        }
    }

    fn group_threshold(&self, j: usize) -> f64 {
        match self.variant {
            PenaltyKind::GroupLasso => self.lambda,
            PenaltyKind::AdaptiveGroupLasso => self.lambda * self.adaptive_weights[j],
            PenaltyKind::GroupElasticNet => self.en_pair.0,
            _ => unreachable!("sorted variants have no per-group threshold"),
        }
    }

    pub fn value(&self, groups: &[Array1<f64>]) -> Result<f64> {
        if groups.is_empty() {
            return Err(SnamError::Config("penalty needs at least one group".into()));
        }
        self.validate(groups.len())?;
        let norms = group_norms(groups);
        Ok(self.value_from_norms(&norms))
    }

    pub(crate) fn value_from_norms(&self, norms: &[f64]) -> f64 {
        match self.variant {
            PenaltyKind::GroupLasso | PenaltyKind::AdaptiveGroupLasso => norms
                .iter()
                .enumerate()
                .map(|(j, n)| self.group_threshold(j) * n)
                .sum(),
            PenaltyKind::GroupElasticNet => norms
                .iter()
                .map(|n| self.en_pair.0 * n + self.en_pair.1 * n * n)
                .sum(),
            PenaltyKind::GroupSlope | PenaltyKind::TwoLevelSlope => {
                let mut sorted = norms.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                self.sorted_weights(norms.len())
                    .iter()
                    .zip(&sorted)
                    .map(|(l, n)| l * n)
                    .sum()
            }
        }
    }

    /// Subgradient with the zero vector at zero groups.
    pub fn subgradient(&self, groups: &[Array1<f64>]) -> Result<Vec<Array1<f64>>> {
        if self.variant.is_sorted() {
            return Err(SnamError::Unsupported(format!(
                "{:?} has no subgradient update; train it with a proximal optimizer",
                self.variant
            )));
        }
        self.validate(groups.len())?;
        Ok(groups
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let norm = l2_norm(g.view());
                if norm == 0.0 {
                    return Array1::zeros(g.len());
                }
                let mut out = g * (self.group_threshold(j) / norm);
                if self.variant == PenaltyKind::GroupElasticNet {
                    out.scaled_add(2.0 * self.en_pair.1, g);
                }
                out
            })
            .collect())
    }

    /// Exact minimizer of `½‖u − v‖² + step · P(u)` over all groups jointly.
    pub fn prox(&self, groups: &[Array1<f64>], step: f64) -> Result<Vec<Array1<f64>>> {
        if !(step > 0.0) {
            return Err(SnamError::Config(format!("prox step must be positive, got {step}")));
        }
        self.validate(groups.len())?;
        let norms = group_norms(groups);
        let targets: Vec<f64> = match self.variant {
            PenaltyKind::GroupLasso | PenaltyKind::AdaptiveGroupLasso => norms
                .iter()
                .enumerate()
                .map(|(j, &n)| (n - step * self.group_threshold(j)).max(0.0))
                .collect(),
            PenaltyKind::GroupElasticNet => norms
                .iter()
                .map(|&n| (n - step * self.en_pair.0).max(0.0) / (1.0 + 2.0 * step * self.en_pair.1))
                .collect(),
            PenaltyKind::GroupSlope | PenaltyKind::TwoLevelSlope => {
                let lam: Vec<f64> = self
                    .sorted_weights(groups.len())
                    .iter()
                    .map(|l| l * step)
                    .collect();
                sorted_l1_prox(&norms, &lam)?
            }
        };
        Ok(groups
            .iter()
            .zip(norms.iter().zip(&targets))
            .map(|(g, (&n, &t))| rescale(g, n, t))
            .collect())
    }
}

/// Scale `g` (of norm `norm`) to norm `target`; exact zeros when the target is 0.
fn rescale(g: &Array1<f64>, norm: f64, target: f64) -> Array1<f64> {
    if target <= 0.0 || norm == 0.0 {
        return Array1::zeros(g.len());
    }
    let out = g * (target / norm);
    // Guard against denormal leftovers so a surviving group is clearly nonzero.
    if l2_norm(out.view()) <= 1e-300 {
        Array1::zeros(g.len())
    } else {
        out
    }
}

pub fn group_norms(groups: &[Array1<f64>]) -> Vec<f64> {
    groups.iter().map(|g| l2_norm(g.view())).collect()
}

fn check_slope_seq(lam: &[f64]) -> Result<()> {
    if lam.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(SnamError::Config("SLOPE weights must be nonnegative".into()));
    }
    if lam.windows(2).any(|w| w[0] < w[1]) {
        return Err(SnamError::Config("SLOPE weights must be nonincreasing".into()));
    }
    Ok(())
}

/// Proximal operator of the sorted-ℓ1 norm on a nonnegative vector:
/// `argmin_{u ≥ 0} ½‖u − v‖² + Σ_j lam_j u_(j)` with `u_(1) ≥ u_(2) ≥ …`.
///
/// Stack-based pool-adjacent-violators on `v_sorted − lam`, then clipping at
/// zero. Ties in `v` keep their original index order.
pub fn sorted_l1_prox(v: &[f64], lam: &[f64]) -> Result<Vec<f64>> {
    if v.len() != lam.len() {
        return Err(SnamError::Shape(format!(
            "sorted-l1 prox: v has {} entries, lam has {}",
            v.len(),
            lam.len()
        )));
    }
    check_slope_seq(lam)?;
    if v.iter().any(|&x| !(x >= 0.0)) {
        return Err(SnamError::Config("sorted-l1 prox expects a nonnegative vector".into()));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

    // Blocks of (start, len, sum); the block mean is the fitted value.
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(v.len());
    for (k, &i) in order.iter().enumerate() {
        blocks.push((k, 1, v[i] - lam[k]));
        while blocks.len() > 1 {
            let (_, len_b, sum_b) = blocks[blocks.len() - 1];
            let (_, len_a, sum_a) = blocks[blocks.len() - 2];
            if sum_a / len_a as f64 > sum_b / len_b as f64 {
                break;
            }
            blocks.pop();
            let top = blocks.last_mut().expect("len > 1");
            top.1 += len_b;
            top.2 += sum_b;
        }
    }
    let mut out = vec![0.0; v.len()];
    for (start, len, sum) in blocks {
        let value = (sum / len as f64).max(0.0);
        for &i in &order[start..start + len] {
            out[i] = value;
        }
    }
    Ok(out)
}
