//! The five commands. Each reads a resolved [`RunConfig`] and writes its
//! artifacts under `config.out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;
use snam_core::data::{
    format_f64, gen_classification, gen_regression, load_csv, train_test_split, SynthSidecar,
};
use snam_core::metrics::{classification_metrics, identification_error, regression_metrics, support_metrics};
use snam_core::model::{build_lasso_model, build_nam, build_rf_snam, build_snam};
use snam_core::optim::{default_support_tol, train};
use snam_core::spam::{spam_fit, SpamModel};
use snam_core::theory::theory_report;
use snam_core::{
    AdditiveModel, Dataset, EvalReport, LayerSpec, LossKind, PenaltyKind, PenaltySpec, Result, SnamError, Task,
    TheoryReport, TrainHistory, TruthModel,
};

use crate::config::{AdaptiveRef, ModelChoice, RunConfig};

pub const DATA_FILE: &str = "data.csv";
pub const SIDECAR_FILE: &str = "data.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";
pub const SPAM_FILE: &str = "spam.json";
pub const THEORY_FILE: &str = "theory.json";
pub const SHAPES_FILE: &str = "shapes.csv";

/// Path of the truth sidecar written next to a synthetic CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn out_dir(config: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&config.out).map_err(|e| {
        SnamError::Config(format!("cannot create output directory {}: {e}", config.out.display()))
    })?;
    Ok(&config.out)
}

fn synth_sidecar(config: &RunConfig, truth: &TruthModel) -> Option<SynthSidecar> {
    config.synth.as_ref().map(|s| SynthSidecar {
        task: config.task,
        n: s.n,
        p: s.p,
        seed: s.seed,
        sigma: truth.noise_sigma,
        x_dist: s.x_dist,
        active: truth.active.clone(),
        target_column: config.target.clone(),
    })
}

/// The configured dataset and, for synthetic data, its ground truth. A CSV
/// carries a truth when a sidecar sits next to it.
pub fn load_dataset(config: &RunConfig) -> Result<(Dataset, Option<TruthModel>)> {
    if let Some(s) = &config.synth {
        let (data, truth) = match config.task {
            Task::Regression => gen_regression(s.n, s.p, s.sigma, s.x_dist, s.seed)?,
            Task::BinaryClassification => gen_classification(s.n, s.p, s.x_dist, s.seed)?,
        };
        return Ok((data, Some(truth)));
    }
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| SnamError::Config("no dataset configured".into()))?;
    let data = load_csv(path, &config.target, config.task, config.standardize)?;
    let side = sidecar_path(path);
    let truth = if side.exists() {
        let sidecar: SynthSidecar = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if sidecar.task != config.task {
            return Err(SnamError::Config(format!(
                "sidecar {} describes a {:?} dataset but the task is {:?}",
                side.display(),
                sidecar.task,
                config.task
            )));
        }
        Some(sidecar.truth())
    } else {
        None
    };
    Ok((data, truth))
}

/// Writes the synthetic dataset and its sidecar. Returns a one-line summary.
pub fn cmd_synth(config: &RunConfig) -> Result<String> {
    if config.synth.is_none() {
        return Err(SnamError::Config("synth needs synthetic data settings, not --data".into()));
    }
    let (data, truth) = load_dataset(config)?;
    let truth = truth.expect("synthetic data has a truth");
    let dir = out_dir(config)?;
    data.write_csv(&dir.join(DATA_FILE), &config.target)?;
    let sidecar = synth_sidecar(config, &truth).expect("synthetic config");
    write_json(&dir.join(SIDECAR_FILE), &sidecar)?;
    Ok(format!(
        "wrote {} rows × {} features to {}; seed {}, sigma {}",
        data.n(),
        data.p(),
        dir.join(DATA_FILE).display(),
        sidecar.seed,
        sidecar.sigma
    ))
}

fn hidden_layers(config: &RunConfig) -> Vec<LayerSpec> {
    config.hidden.iter().map(|&w| LayerSpec::relu(w)).collect()
}

fn build_model(config: &RunConfig, choice: ModelChoice, p: usize) -> Result<AdditiveModel> {
    let hidden = hidden_layers(config);
    let seed = config.train.seed;
    match choice {
        ModelChoice::Snam => build_snam(p, &hidden, seed, config.task),
        ModelChoice::Nam => build_nam(p, &hidden, seed, config.task),
        ModelChoice::RfSnam => build_rf_snam(p, &hidden, seed, config.task),
        ModelChoice::Lasso => build_lasso_model(p, config.task),
        ModelChoice::Spam => Err(SnamError::Unsupported("SPAM is not a neural additive model".into())),
    }
}

/// Fits the reference model and returns `1/‖Θ_j,ref‖₂` weights.
fn adaptive_weights(config: &RunConfig, reference: AdaptiveRef, train_set: &Dataset) -> Result<Vec<f64>> {
    let (choice, penalty) = match reference {
        AdaptiveRef::Nam => (ModelChoice::Nam, PenaltySpec::default()),
        AdaptiveRef::Snam => (ModelChoice::Snam, PenaltySpec::group_lasso(config.penalty.lambda)),
    };
    let model = build_model(config, choice, train_set.p())?;
    let (fit, _) = train(model, train_set, LossKind::for_task(config.task), &penalty, &config.train)?;
    Ok(PenaltySpec::adaptive_weights_from_norms(&fit.group_norms()))
}

fn check_task(config: &RunConfig, data: &Dataset) -> Result<()> {
    if data.task != config.task {
        return Err(SnamError::Config(format!(
            "dataset is {:?} but the run is configured for {:?}",
            data.task, config.task
        )));
    }
    Ok(())
}

fn split(config: &RunConfig, data: &Dataset) -> Result<(Dataset, Dataset)> {
    train_test_split(data, config.split.train_fraction, config.split.seed)
}

struct Evaluation<'a> {
    model: &'a str,
    task: Task,
    n_train: usize,
    test: &'a Dataset,
    /// Predictions on the test split: the response for regression, P(y = 1) otherwise.
    predictions: ndarray::Array1<f64>,
    shapes: Array2<f64>,
    selected: Vec<usize>,
    support_tol: f64,
    param_count: usize,
    status: Option<String>,
}

fn evaluate(e: Evaluation<'_>, truth: Option<&TruthModel>, config: &RunConfig) -> Result<EvalReport> {
    let (regression, classification) = match e.task {
        Task::Regression => (Some(regression_metrics(e.test.y.view(), e.predictions.view())?), None),
        Task::BinaryClassification => (None, Some(classification_metrics(e.test.y.view(), e.predictions.view())?)),
    };
    let mut report = EvalReport {
        model: e.model.to_string(),
        task: e.task,
        n_train: e.n_train,
        n_test: e.test.n(),
        regression,
        classification,
        feature_count: e.selected.len(),
        selected_features: e.selected,
        support_tol: e.support_tol,
        param_count: e.param_count,
        precision: None,
        recall: None,
        identification_errors: None,
        mean_active_identification_error: None,
        status: e.status,
        config: serde_json::to_value(config)?,
    };
    if let Some(truth) = truth {
        if truth.p != e.test.p() {
            return Err(SnamError::Shape(format!(
                "truth describes {} features, data has {}",
                truth.p,
                e.test.p()
            )));
        }
        let (precision, recall) = support_metrics(&report.selected_features, &truth.active);
        let f = truth.true_effects(e.test.x.view());
        let errors = (0..e.test.p())
            .map(|j| identification_error(e.shapes.column(j), f.column(j)))
            .collect::<Result<Vec<f64>>>()?;
        let active: Vec<f64> = truth.active.iter().map(|&j| errors[j]).collect();
        report.precision = Some(precision);
        report.recall = Some(recall);
        report.mean_active_identification_error =
            (!active.is_empty()).then(|| active.iter().sum::<f64>() / active.len() as f64);
        report.identification_errors = Some(errors);
    }
    Ok(report)
}

#[derive(Serialize)]
struct Timing {
    fit_seconds: f64,
    total_seconds: f64,
}

/// Result of `train` or `spam`: the report plus where it was written.
pub struct RunOutcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub history: Option<TrainHistory>,
}

pub fn cmd_train(config: &RunConfig) -> Result<RunOutcome> {
    if config.model == ModelChoice::Spam {
        return cmd_spam(config);
    }
    let start = Instant::now();
    let (data, truth) = load_dataset(config)?;
    check_task(config, &data)?;
    let (train_set, test_set) = split(config, &data)?;
    let dir = out_dir(config)?.to_path_buf();

    let mut resolved = config.clone();
    if let Some(reference) = config.adaptive_ref {
        resolved.penalty.adaptive_weights = adaptive_weights(config, reference, &train_set)?;
    }
    if resolved.penalty.variant == PenaltyKind::AdaptiveGroupLasso && resolved.penalty.adaptive_weights.is_empty() {
        return Err(SnamError::Config(
            "adaptive group lasso needs --adaptive-weights or --adaptive-ref".into(),
        ));
    }

    let model = build_model(&resolved, resolved.model, data.p())?;
    let fit_start = Instant::now();
    let (fit, history) = train(
        model,
        &train_set,
        LossKind::for_task(resolved.task),
        &resolved.penalty,
        &resolved.train,
    )?;
    let fit_seconds = fit_start.elapsed().as_secs_f64();
    fit.save(&dir.join(CHECKPOINT_FILE))?;
    fs::write(dir.join(HISTORY_FILE), history.to_csv()?)?;

    let group_size = fit.trainable_groups().first().map_or(1, |g| g.len());
    let tol = resolved
        .tol
        .unwrap_or_else(|| default_support_tol(resolved.train.optimizer, group_size));
    let report = evaluate(
        Evaluation {
            model: model_name(resolved.model),
            task: resolved.task,
            n_train: train_set.n(),
            test: &test_set,
            predictions: fit.predict(test_set.x.view())?,
            shapes: fit.shape_functions(test_set.x.view())?,
            selected: fit.selected_support(tol).indices,
            support_tol: tol,
            param_count: fit.num_trainable(),
            status: None,
        },
        truth.as_ref(),
        &resolved,
    )?;
    let report_path = dir.join(REPORT_FILE);
    write_json(&report_path, &report)?;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            fit_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(RunOutcome {
        report,
        report_path,
        history: Some(history),
    })
}

fn model_name(choice: ModelChoice) -> &'static str {
    match choice {
        ModelChoice::Snam => "snam",
        ModelChoice::Nam => "nam",
        ModelChoice::RfSnam => "rf_snam",
        ModelChoice::Lasso => "lasso",
        ModelChoice::Spam => "spam",
    }
}

pub fn cmd_spam(config: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    if config.task != Task::Regression {
        return Err(SnamError::Unsupported("SPAM fits regression data only".into()));
    }
    let (data, truth) = load_dataset(config)?;
    check_task(config, &data)?;
    let (train_set, test_set) = split(config, &data)?;
    let dir = out_dir(config)?.to_path_buf();
    let mut resolved = config.clone();
    resolved.model = ModelChoice::Spam;

    let fit_start = Instant::now();
    let fit: SpamModel = spam_fit(&train_set, &resolved.spam)?;
    let fit_seconds = fit_start.elapsed().as_secs_f64();
    write_json(&dir.join(SPAM_FILE), &fit)?;

    let support = fit.selected_support();
    let report = evaluate(
        Evaluation {
            model: "spam",
            task: Task::Regression,
            n_train: train_set.n(),
            test: &test_set,
            predictions: fit.predict(test_set.x.view())?,
            shapes: fit.shape_functions(test_set.x.view())?,
            support_tol: support.tol,
            selected: support.indices,
            // One smoothed value per training point and feature, plus the intercept.
            param_count: train_set.n() * train_set.p() + 1,
            status: Some(fit.status.as_str().to_string()),
        },
        truth.as_ref(),
        &resolved,
    )?;
    let report_path = dir.join(REPORT_FILE);
    write_json(&report_path, &report)?;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            fit_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(RunOutcome {
        report,
        report_path,
        history: None,
    })
}

/// Theory quantities of a random-feature checkpoint on the training split it was fitted on.
pub fn cmd_theory(config: &RunConfig, checkpoint: &Path) -> Result<TheoryReport> {
    let model = AdditiveModel::load(checkpoint)?;
    let (data, truth) = load_dataset(config)?;
    let truth = truth.ok_or_else(|| {
        SnamError::Config("theory checks need the data-generating truth (synthetic data or a CSV sidecar)".into())
    })?;
    let (train_set, _) = split(config, &data)?;
    let report = theory_report(&model, &train_set, &truth, config.delta1, config.delta2)?;
    write_json(&out_dir(config)?.join(THEORY_FILE), &report)?;
    Ok(report)
}

/// Writes `feature,x,fhat[,f]` with one row per (feature, sample) of the full dataset.
pub fn cmd_export_shapes(config: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    let model = AdditiveModel::load(checkpoint)?;
    let (data, truth) = load_dataset(config)?;
    let shapes = model.shape_functions(data.x.view())?;
    let f = truth.as_ref().map(|t| t.true_effects(data.x.view()));
    let path = out_dir(config)?.join(SHAPES_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    if f.is_some() {
        w.write_record(["feature", "x", "fhat", "f"])?;
    } else {
        w.write_record(["feature", "x", "fhat"])?;
    }
    for j in 0..data.p() {
        for i in 0..data.n() {
            let mut row = vec![
                data.feature_names[j].clone(),
                format_f64(data.x[[i, j]]),
                format_f64(shapes[[i, j]]),
            ];
            if let Some(f) = &f {
                row.push(format_f64(f[[i, j]]));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// Aligned text table of a report.
pub fn render_report(r: &EvalReport) -> String {
    let mut rows: Vec<(&str, String)> = Vec::new();
    let fmt = |v: f64| format!("{v:.4}");
    if let Some(m) = &r.regression {
        rows.push(("MSE loss", fmt(m.mse)));
        rows.push(("MAE", fmt(m.mae)));
        rows.push(("R2", fmt(m.r2)));
    }
    if let Some(m) = &r.classification {
        rows.push(("Test accuracy", fmt(m.accuracy)));
        rows.push(("CE loss", fmt(m.ce_loss)));
        rows.push(("AUC", m.auc.map_or("n/a".into(), fmt)));
    }
    if let Some(e) = r.mean_active_identification_error {
        rows.push(("Iden. error", fmt(e)));
    }
    if let (Some(p), Some(q)) = (r.precision, r.recall) {
        rows.push(("Precision", format!("{p:.2}")));
        rows.push(("Recall", format!("{q:.2}")));
    }
    rows.push(("#. Feature", r.feature_count.to_string()));
    rows.push(("#. Param", r.param_count.to_string()));
    if let Some(s) = &r.status {
        rows.push(("Status", s.clone()));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("{:<width$}  {}\n", "", r.model);
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}
