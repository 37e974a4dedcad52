//! Datasets: the synthetic additive benchmarks and headered CSV ingestion.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnamError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// Per-column z-scoring that was applied to `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_names: Vec<String>,
    pub task: Task,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, task: Task) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::with_names(x, y, names, task)
    }

    pub fn with_names(x: Array2<f64>, y: Array1<f64>, feature_names: Vec<String>, task: Task) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SnamError::Shape(format!("X has {} rows but y has {}", x.nrows(), y.len())));
        }
        if feature_names.len() != x.ncols() {
            return Err(SnamError::Shape("one feature name per column required".into()));
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(SnamError::NonFiniteInput { index: index / x.ncols().max(1) });
        }
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(SnamError::NonFiniteInput { index });
        }
        if task == Task::BinaryClassification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(SnamError::Config("classification labels must be 0 or 1".into()));
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            task,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            task: self.task,
            standardization: self.standardization.clone(),
        }
    }

    /// Z-score every column. Constant columns are left unscaled (sd recorded as 1).
    pub fn standardize(&mut self) {
        let p = self.p();
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for (j, mut col) in self.x.columns_mut().into_iter().enumerate() {
            let mean = col.mean().unwrap_or(0.0);
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len().max(1) as f64;
            let sd = var.sqrt();
            if sd > 0.0 {
                col.mapv_inplace(|v| (v - mean) / sd);
                means.push(mean);
                sds.push(sd);
            } else {
                log::warn!("column {} ({}) is constant; left unscaled", j, self.feature_names[j]);
                means.push(0.0);
                sds.push(1.0);
            }
        }
        self.standardization = Some(Standardization { means, sds });
    }

    /// Undo [`Dataset::standardize`].
    pub fn destandardize(&mut self) {
        if let Some(st) = self.standardization.take() {
            for (j, mut col) in self.x.columns_mut().into_iter().enumerate() {
                let (m, s) = (st.means[j], st.sds[j]);
                col.mapv_inplace(|v| v * s + m);
            }
        }
    }

    pub fn write_csv(&self, path: &Path, target_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(target_column.to_string());
        w.write_record(&header)?;
        for (row, y) in self.x.rows().into_iter().zip(self.y.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            rec.push(format_f64(*y));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Seeded uniform train/test split.
pub fn train_test_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SnamError::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let mut idx: Vec<usize> = (0..data.n()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((data.n() as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, data.n().saturating_sub(1).max(1));
    let (train, test) = idx.split_at(n_train);
    Ok((data.select_rows(train), data.select_rows(test)))
}

pub fn load_csv(path: &Path, target_column: &str, task: Task, standardize: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, target_column, task, standardize)
}

pub fn parse_csv(text: &str, target_column: &str, task: Task, standardize: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| SnamError::Config(format!("target column '{target_column}' not found in header")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, h)| h.clone())
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(SnamError::Parse {
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| SnamError::Parse {
                row,
                column: headers[j].clone(),
                message: if field.trim().is_empty() {
                    "missing value".into()
                } else {
                    format!("'{field}' is not a number")
                },
            })?;
            if !value.is_finite() {
                return Err(SnamError::Parse {
                    row,
                    column: headers[j].clone(),
                    message: "non-finite value".into(),
                });
            }
            if j == target {
                ys.push(value);
            } else {
                xs.push(value);
            }
        }
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, feature_names.len()), xs).map_err(|e| SnamError::Shape(e.to_string()))?;
    let mut data = Dataset::with_names(x, Array1::from_vec(ys), feature_names, task)?;
    if standardize {
        data.standardize();
    }
    Ok(data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XDist {
    Uniform { low: f64, high: f64 },
    StandardNormal,
}

impl Default for XDist {
    fn default() -> Self {
        XDist::Uniform { low: -2.5, high: 2.5 }
    }
}

/// The four nonzero benchmark effects, indexed 0..4.
pub fn benchmark_effect(k: usize, x: f64) -> f64 {
    match k {
        0 => 2.0 * x * x * x.tanh(),
        1 => x.sin() * x.cos() + x * x,
        2 => 20.0 / (1.0 + (-5.0 * x.sin()).exp()),
        3 => 20.0 * (2.0 * x).sin().powi(3) - 6.0 * x.cos() + x * x,
        _ => 0.0,
    }
}

/// Additive ground truth: feature `j` carries [`benchmark_effect`] `j` when `j`
/// is in `active`, and the zero function otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub p: usize,
    pub active: Vec<usize>,
    pub noise_sigma: f64,
}

impl TruthModel {
    pub fn benchmark(p: usize, noise_sigma: f64) -> Result<Self> {
        if p < 4 {
            return Err(SnamError::Config(format!("the benchmark needs p ≥ 4, got {p}")));
        }
        if !(noise_sigma >= 0.0) {
            return Err(SnamError::Config("noise sigma must be nonnegative".into()));
        }
        Ok(TruthModel {
            p,
            active: vec![0, 1, 2, 3],
            noise_sigma,
        })
    }

    pub fn effect(&self, j: usize, x: f64) -> f64 {
        if self.active.contains(&j) {
            benchmark_effect(j, x)
        } else {
            0.0
        }
    }

    /// `f_j(X_ij)` for every entry; zero columns off the active set.
    pub fn true_effects(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        for &j in self.active.iter().filter(|&&j| j < x.ncols()) {
            out.column_mut(j).assign(&x.column(j).mapv(|v| benchmark_effect(j, v)));
        }
        out
    }

    pub fn signal(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.true_effects(x).sum_axis(Axis(1))
    }
}

fn draw_x(n: usize, p: usize, dist: XDist, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    match dist {
        XDist::Uniform { low, high } => {
            let u = Uniform::new(low, high).map_err(|e| SnamError::Config(format!("x distribution: {e}")))?;
            Ok(Array2::from_shape_simple_fn((n, p), || u.sample(rng)))
        }
        XDist::StandardNormal => Ok(Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(rng))),
    }
}

pub fn gen_regression(n: usize, p: usize, sigma: f64, x_dist: XDist, seed: u64) -> Result<(Dataset, TruthModel)> {
    let truth = TruthModel::benchmark(p, sigma)?;
    let data = gen_regression_from(&truth, n, x_dist, seed)?;
    Ok((data, truth))
}

/// `y = Σ_j f_j(X_j) + σ·N(0, 1)` with X drawn row by row, then the noise.
pub fn gen_regression_from(truth: &TruthModel, n: usize, x_dist: XDist, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = draw_x(n, truth.p, x_dist, &mut rng)?;
    let signal = truth.signal(x.view());
    let y = signal.mapv(|s| {
        let e: f64 = StandardNormal.sample(&mut rng);
        s + truth.noise_sigma * e
    });
    Dataset::new(x, y, Task::Regression)
}

pub fn gen_classification(n: usize, p: usize, x_dist: XDist, seed: u64) -> Result<(Dataset, TruthModel)> {
    let truth = TruthModel::benchmark(p, 0.0)?;
    let data = gen_classification_from(&truth, n, x_dist, seed)?;
    Ok((data, truth))
}

/// Labels drawn as Bernoulli(sigmoid(Σ_j f_j(X_j))).
pub fn gen_classification_from(truth: &TruthModel, n: usize, x_dist: XDist, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = draw_x(n, truth.p, x_dist, &mut rng)?;
    let signal = truth.signal(x.view());
    let y = signal.mapv(|s| {
        let u: f64 = rng.random();
        if u < sigmoid(s) {
            1.0
        } else {
            0.0
        }
    });
    Dataset::new(x, y, Task::BinaryClassification)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Generation parameters written next to a synthetic CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub task: Task,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub sigma: f64,
    pub x_dist: XDist,
    pub active: Vec<usize>,
    pub target_column: String,
}

impl SynthSidecar {
    pub fn truth(&self) -> TruthModel {
        TruthModel {
            p: self.p,
            active: self.active.clone(),
            noise_sigma: self.sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effects_at_zero() {
        assert_eq!(benchmark_effect(0, 0.0), 0.0);
        assert_eq!(benchmark_effect(1, 0.0), 0.0);
        assert_eq!(benchmark_effect(2, 0.0), 10.0);
        assert_eq!(benchmark_effect(3, 0.0), -6.0);
        assert_eq!(benchmark_effect(7, 1.3), 0.0);
    }

    #[test]
    fn small_p_is_rejected() {
        assert!(matches!(
            gen_regression(10, 3, 1.0, XDist::default(), 0),
            Err(SnamError::Config(_))
        ));
    }

    #[test]
    fn noiseless_response_is_the_signal() {
        let (d, t) = gen_regression(50, 4, 0.0, XDist::default(), 3).unwrap();
        assert_eq!(d.y, t.signal(d.x.view()));
    }

    #[test]
    fn default_scale() {
        let (d, _) = gen_regression(3000, 24, 1.0, XDist::default(), 1).unwrap();
        assert_eq!(d.x.dim(), (3000, 24));
        assert!(d.x.iter().all(|&v| (-2.5..2.5).contains(&v)));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_classification(200, 6, XDist::StandardNormal, 9).unwrap().0;
        let b = gen_classification(200, 6, XDist::StandardNormal, 9).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn true_effects_columns() {
        let (d, t) = gen_regression(20, 8, 1.0, XDist::default(), 4).unwrap();
        let mut x = d.x.clone();
        x.row_mut(0).fill(0.0);
        let f = t.true_effects(x.view());
        assert!(f.slice(ndarray::s![.., 4..]).iter().all(|&v| v == 0.0));
        assert_eq!(f[[0, 2]], 10.0);
        let row_sums = f.sum_axis(Axis(1));
        assert_eq!(row_sums, t.signal(x.view()));
    }

    #[test]
    fn csv_round_trip() {
        let text = "a,target,b\n1.5,0,-2\n0.25,1,3e2\n-7,1,0.125\n";
        let d = parse_csv(text, "target", Task::BinaryClassification, false).unwrap();
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(d.x, ndarray::array![[1.5, -2.0], [0.25, 300.0], [-7.0, 0.125]]);
        assert_eq!(d.y, ndarray::array![0.0, 1.0, 1.0]);
    }

    #[test]
    fn csv_errors_name_the_cell() {
        let err = parse_csv("a,y\n1,2\nfoo,3\n", "y", Task::Regression, false).unwrap_err();
        match err {
            SnamError::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "a")),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_csv("a,y\n1,\n", "y", Task::Regression, false).unwrap_err();
        assert!(matches!(err, SnamError::Parse { row: 1, .. }));
        let err = parse_csv("a,b\n1,2\n", "y", Task::Regression, false).unwrap_err();
        assert!(err.to_string().contains("'y'"));
    }

    #[test]
    fn standardize_round_trip() {
        let text = "a,b,c,y\n1,10,5,0\n2,20,5,1\n4,-3,5,2\n";
        let original = parse_csv(text, "y", Task::Regression, false).unwrap();
        let mut d = parse_csv(text, "y", Task::Regression, true).unwrap();
        assert!(d.standardized());
        let col = d.x.column(0);
        assert!(col.mean().unwrap().abs() < 1e-12);
        // constant column untouched
        assert!(d.x.column(2).iter().all(|&v| v == 5.0));
        d.destandardize();
        assert!(!d.standardized());
        assert!((&d.x - &original.x).iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn split_partitions_rows() {
        let (d, _) = gen_regression(100, 4, 1.0, XDist::default(), 2).unwrap();
        let (tr, te) = train_test_split(&d, 0.8, 5).unwrap();
        assert_eq!((tr.n(), te.n()), (80, 20));
        let total: f64 = tr.y.sum() + te.y.sum();
        assert!((total - d.y.sum()).abs() < 1e-9);
    }
}
