//! Prediction quality, feature-selection quality and shape-function recovery.

use std::collections::BTreeSet;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Result, SnamError};

/// Features whose group norm exceeds `tol` (0-based indices, sorted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub indices: Vec<usize>,
    pub tol: f64,
}

impl SupportSet {
    pub fn from_norms(norms: &[f64], tol: f64) -> Self {
        SupportSet {
            indices: norms
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > tol)
                .map(|(j, _)| j)
                .collect(),
            tol,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }
}

/// `(precision, recall)` of a predicted support against the true one.
/// An empty prediction has precision 1 if the truth is empty too, else 0.
pub fn support_metrics(predicted: &[usize], truth: &[usize]) -> (f64, f64) {
    let p: BTreeSet<usize> = predicted.iter().copied().collect();
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    let hits = p.intersection(&t).count() as f64;
    let precision = if p.is_empty() {
        if t.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / p.len() as f64
    };
    let recall = if t.is_empty() { 1.0 } else { hits / t.len() as f64 };
    (precision, recall)
}

/// Variance of `fhat − f`: the squared error left after the best constant shift.
pub fn identification_error(fhat: ArrayView1<f64>, f: ArrayView1<f64>) -> Result<f64> {
    if fhat.len() != f.len() {
        return Err(SnamError::Shape(format!(
            "fitted column has {} entries, truth has {}",
            fhat.len(),
            f.len()
        )));
    }
    if f.is_empty() {
        return Ok(0.0);
    }
    let n = f.len() as f64;
    let diff: Vec<f64> = fhat.iter().zip(f).map(|(a, b)| a - b).collect();
    let c = diff.iter().sum::<f64>() / n;
    Ok(diff.iter().map(|d| (d - c) * (d - c)).sum::<f64>() / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

pub fn regression_metrics(y: ArrayView1<f64>, yhat: ArrayView1<f64>) -> Result<RegressionMetrics> {
    check_lengths(y, yhat)?;
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut sst = 0.0;
    for (&a, &b) in y.iter().zip(yhat) {
        sse += (a - b) * (a - b);
        sae += (a - b).abs();
        sst += (a - mean) * (a - mean);
    }
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(RegressionMetrics {
        mse: sse / n,
        mae: sae / n,
        r2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub ce_loss: f64,
    pub accuracy: f64,
    /// Absent when `y` has a single class.
    pub auc: Option<f64>,
}

/// Probabilities `phat` of class 1; a probability of exactly 0.5 counts as class 1.
pub fn classification_metrics(y: ArrayView1<f64>, phat: ArrayView1<f64>) -> Result<ClassificationMetrics> {
    check_lengths(y, phat)?;
    let n = y.len() as f64;
    let eps = 1e-15;
    let mut ce = 0.0;
    let mut correct = 0usize;
    for (&t, &q) in y.iter().zip(phat) {
        let q = q.clamp(eps, 1.0 - eps);
        ce -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        let label = if q >= 0.5 { 1.0 } else { 0.0 };
        if label == t {
            correct += 1;
        }
    }
    Ok(ClassificationMetrics {
        ce_loss: ce / n,
        accuracy: correct as f64 / n,
        auc: auc(y, phat),
    })
}

/// Mann–Whitney AUC with tied scores sharing their average rank.
pub fn auc(y: ArrayView1<f64>, scores: ArrayView1<f64>) -> Option<f64> {
    let n = y.len();
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    let negatives = n - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut k = i;
        while k + 1 < n && scores[order[k + 1]] == scores[order[i]] {
            k += 1;
        }
        // Ranks i+1 ..= k+1 share their mean.
        let mean_rank = (i + k) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=k].iter().filter(|&&r| y[r] == 1.0).count() as f64 * mean_rank;
        i = k + 1;
    }
    let pos = positives as f64;
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * negatives as f64))
}

fn check_lengths(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(SnamError::Shape(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(SnamError::Shape("metrics need at least one sample".into()));
    }
    Ok(())
}

/// Held-out evaluation of one fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub task: Task,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    /// Selected features, 0-based.
    pub selected_features: Vec<usize>,
    pub support_tol: f64,
    pub feature_count: usize,
    pub param_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    /// Per-feature identification error on the test split, when the truth is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_active_identification_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    /// Resolved run configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn support_examples() {
        assert_eq!(support_metrics(&[0, 1, 2, 3], &[0, 1, 2, 3]), (1.0, 1.0));
        let all: Vec<usize> = (0..24).collect();
        let (p, r) = support_metrics(&all, &[0, 1, 2, 3]);
        assert!((p - 4.0 / 24.0).abs() < 1e-15 && r == 1.0);
        assert_eq!(support_metrics(&[], &[0, 1]), (0.0, 0.0));
        assert_eq!(support_metrics(&[], &[]).0, 1.0);
    }

    #[test]
    fn support_from_norms() {
        let s = SupportSet::from_norms(&[0.0, 1e-9, 2.0], 1e-8);
        assert_eq!(s.indices, vec![2]);
        assert!(SupportSet::from_norms(&[1.0, 5.0], f64::INFINITY).is_empty());
        assert_eq!(SupportSet::from_norms(&[1.0, 5.0], 0.0).len(), 2);
    }

    #[test]
    fn identification_examples() {
        let f = array![1.0, -2.0, 0.5];
        assert_eq!(identification_error((&f + 7.0).view(), f.view()).unwrap(), 0.0);
        assert_eq!(identification_error(f.view(), f.view()).unwrap(), 0.0);
        let e = identification_error(array![0.0, 2.0].view(), array![0.0, 0.0].view()).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
        assert!(identification_error(array![0.0].view(), f.view()).is_err());
    }

    #[test]
    fn regression_perfect_fit() {
        let y = array![1.0, 2.0, 4.0];
        let m = regression_metrics(y.view(), y.view()).unwrap();
        assert_eq!((m.mse, m.mae, m.r2), (0.0, 0.0, 1.0));
        let m = regression_metrics(y.view(), array![1.0, 2.0, 3.0].view()).unwrap();
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-15 && m.r2 < 1.0);
    }

    #[test]
    fn classification_examples() {
        let m = classification_metrics(array![0.0, 1.0].view(), array![0.5, 0.5].view()).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.auc, Some(0.5));
        let m = classification_metrics(array![0.0, 0.0, 1.0].view(), array![0.1, 0.3, 0.9].view()).unwrap();
        assert_eq!((m.accuracy, m.auc), (1.0, Some(1.0)));
        let m = classification_metrics(array![1.0, 1.0].view(), array![0.1, 0.9].view()).unwrap();
        assert_eq!(m.auc, None);
    }

    #[test]
    fn auc_counts_ties_as_half() {
        // One positive tied with one of two negatives: pairs (win, tie) → 0.75.
        let y = array![1.0, 0.0, 0.0];
        let s = array![0.5, 0.5, 0.1];
        assert_eq!(auc(y.view(), s.view()), Some(0.75));
    }
}
