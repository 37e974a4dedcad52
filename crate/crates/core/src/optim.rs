//! Training loops: subgradient descent (plain, heavy-ball momentum, Adam),
//! proximal gradient descent and FISTA, over mini-batches or the full batch.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sigmoid, Dataset, Task};
use crate::error::{Result, SnamError};
use crate::linalg::power_iteration;
use crate::model::{AdditiveModel, ParamSet};
use crate::penalty::{group_norms, PenaltySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `½ mean (y − h)²`
    Mse,
    /// Mean binary cross-entropy with `h` as the logit.
    CrossEntropy,
}

impl LossKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => LossKind::Mse,
            Task::BinaryClassification => LossKind::CrossEntropy,
        }
    }

    pub fn value(self, h: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let n = h.len().max(1) as f64;
        match self {
            LossKind::Mse => h.iter().zip(y).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum::<f64>() / n,
            LossKind::CrossEntropy => h.iter().zip(y).map(|(&a, &b)| softplus(a) - b * a).sum::<f64>() / n,
        }
    }

    /// Derivative of [`LossKind::value`] with respect to each `h_i`.
    pub fn derivative(self, h: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        let n = h.len().max(1) as f64;
        match self {
            LossKind::Mse => Array1::from_iter(h.iter().zip(y).map(|(a, b)| (a - b) / n)),
            LossKind::CrossEntropy => Array1::from_iter(h.iter().zip(y).map(|(&a, &b)| (sigmoid(a) - b) / n)),
        }
    }

    /// Upper bound on the second derivative of the per-sample loss in `h`.
    fn curvature(self) -> f64 {
        match self {
            LossKind::Mse => 1.0,
            LossKind::CrossEntropy => 0.25,
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SubgradPlain,
    SubgradMomentum,
    SubgradAdam,
    Proxgd,
    Fista,
}

impl OptimizerKind {
    pub fn is_proximal(self) -> bool {
        matches!(self, OptimizerKind::Proxgd | OptimizerKind::Fista)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub momentum_coef: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub shuffle: bool,
    /// Train the global intercept. When false it stays at its current value.
    pub fit_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Proxgd,
            learning_rate: 5e-3,
            epochs: 100,
            batch_size: 256,
            seed: 0,
            momentum_coef: 0.9,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            shuffle: true,
            fit_intercept: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(SnamError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(SnamError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum_coef) {
            return Err(SnamError::Config(format!("momentum must be in [0, 1), got {}", self.momentum_coef)));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(SnamError::Config(format!("Adam betas must be in [0, 1), got ({b1}, {b2})")));
        }
        if !(self.adam_eps > 0.0) {
            return Err(SnamError::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Data-fit loss on the whole training set at the end of the epoch.
    pub loss: f64,
    pub objective: f64,
    pub group_norms: Vec<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.objective).collect()
    }

    /// Same as `==` but ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.group_norms.len() == b.group_norms.len()
                    && a.group_norms.iter().zip(&b.group_norms).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// CSV with columns `epoch,loss,objective,seconds,norm_1..norm_p`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let p = self.epochs.first().map_or(0, |e| e.group_norms.len());
        let mut header = vec!["epoch".to_string(), "loss".into(), "objective".into(), "seconds".into()];
        header.extend((1..=p).map(|j| format!("norm_{j}")));
        w.write_record(&header)?;
        for e in &self.epochs {
            let mut row = vec![
                e.epoch.to_string(),
                crate::data::format_f64(e.loss),
                crate::data::format_f64(e.objective),
                crate::data::format_f64(e.seconds),
            ];
            row.extend(e.group_norms.iter().map(|&v| crate::data::format_f64(v)));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| SnamError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Moment buffers for the subgradient optimizers.
#[derive(Clone, Debug, Default)]
pub struct SubgradState {
    first: Option<ParamSet>,
    second: Option<ParamSet>,
    steps: i32,
}

/// One subgradient step: the total direction `∂L/∂Θ_j + ∂P/∂Θ_j` (zero
/// penalty term on zero groups) goes through the configured optimizer.
pub fn subgradient_step(
    params: &mut ParamSet,
    grad: &ParamSet,
    penalty: &PenaltySpec,
    state: &mut SubgradState,
    config: &TrainConfig,
) -> Result<()> {
    let sub = penalty.subgradient(&params.groups)?;
    let mut dir = grad.clone();
    for (d, s) in dir.groups.iter_mut().zip(&sub) {
        *d += s;
    }
    if !config.fit_intercept {
        dir.bias = 0.0;
    }
    let eta = config.learning_rate;
    let update = match config.optimizer {
        OptimizerKind::SubgradPlain => dir,
        OptimizerKind::SubgradMomentum => {
            let velocity = match state.first.take() {
                Some(v) => dir.axpy(config.momentum_coef, &v),
                None => dir,
            };
            state.first = Some(velocity.clone());
            velocity
        }
        OptimizerKind::SubgradAdam => {
            let (b1, b2) = config.adam_betas;
            state.steps += 1;
            let m = state.first.take().unwrap_or_else(|| ParamSet::zeros_like(&dir));
            let v = state.second.take().unwrap_or_else(|| ParamSet::zeros_like(&dir));
            let m = combine(&m, &dir, |a, d| b1 * a + (1.0 - b1) * d);
            let v = combine(&v, &dir, |a, d| b2 * a + (1.0 - b2) * d * d);
            let c1 = 1.0 - b1.powi(state.steps);
            let c2 = 1.0 - b2.powi(state.steps);
            let eps = config.adam_eps;
            let step = combine(&m, &v, |a, b| (a / c1) / ((b / c2).sqrt() + eps));
            state.first = Some(m);
            state.second = Some(v);
            step
        }
        other => {
            return Err(SnamError::Unsupported(format!("{other:?} is not a subgradient optimizer")));
        }
    };
    *params = params.axpy(-eta, &update);
    Ok(())
}

fn combine(a: &ParamSet, b: &ParamSet, f: impl Fn(f64, f64) -> f64) -> ParamSet {
    ParamSet {
        groups: a
            .groups
            .iter()
            .zip(&b.groups)
            .map(|(x, y)| Array1::from_iter(x.iter().zip(y).map(|(&p, &q)| f(p, q))))
            .collect(),
        bias: f(a.bias, b.bias),
    }
}

/// Gradient step on the data-fit loss followed by the penalty prox with step `eta`.
/// The intercept takes a plain gradient step.
pub fn proximal_step(params: &ParamSet, grad: &ParamSet, penalty: &PenaltySpec, eta: f64) -> Result<ParamSet> {
    let moved = params.axpy(-eta, grad);
    let groups = if penalty.is_zero() {
        moved.groups
    } else {
        penalty.prox(&moved.groups, eta)?
    };
    Ok(ParamSet {
        groups,
        bias: moved.bias,
    })
}

/// Previous iterate and iteration counter for FISTA.
#[derive(Clone, Debug, Default)]
pub struct FistaState {
    previous: Option<ParamSet>,
    iteration: usize,
}

impl FistaState {
    /// Extrapolation weight `(k − 1)/(k + 2)` for the upcoming iteration `k`
    /// (counting from 1).
    pub fn momentum_weight(&self) -> f64 {
        let k = (self.iteration + 1) as f64;
        (k - 1.0) / (k + 2.0)
    }

    pub fn extrapolate(&self, current: &ParamSet) -> ParamSet {
        match &self.previous {
            None => current.clone(),
            Some(prev) => {
                let diff = current.axpy(-1.0, prev);
                current.axpy(self.momentum_weight(), &diff)
            }
        }
    }
}

/// One FISTA iteration: extrapolate, evaluate the gradient at the extrapolated
/// point with `grad_at`, then take a proximal step from there.
pub fn fista_step<F>(
    current: &ParamSet,
    mut grad_at: F,
    penalty: &PenaltySpec,
    eta: f64,
    state: &mut FistaState,
) -> Result<ParamSet>
where
    F: FnMut(&ParamSet) -> Result<ParamSet>,
{
    let y = state.extrapolate(current);
    let grad = grad_at(&y)?;
    let next = proximal_step(&y, &grad, penalty, eta)?;
    state.previous = Some(current.clone());
    state.iteration += 1;
    Ok(next)
}

/// Support tolerance used when reading off the selected features.
/// Proximal methods produce exact zeros; subgradient methods only approach them.
pub fn default_support_tol(optimizer: OptimizerKind, group_size: usize) -> f64 {
    if optimizer.is_proximal() {
        0.0
    } else {
        1e-8 * (group_size as f64).sqrt()
    }
}

/// Largest eigenvalue of the Gauss–Newton matrix `JᵀJ/n` at the current
/// parameters, scaled by the loss curvature bound. `1/L̂` is a safe step for
/// models linear in their trainable parameters.
pub fn estimate_lipschitz(model: &AdditiveModel, data: &Dataset, loss: LossKind, fit_intercept: bool) -> Result<f64> {
    let x = data.x.view();
    let template = model.params();
    let n = data.n() as f64;
    let mut failure = None;
    let lam = power_iteration(
        template.len(),
        |v| {
            let mut dir = template.from_flat_like(v);
            if !fit_intercept {
                dir.bias = 0.0;
            }
            let out = model
                .jvp(x, &dir.groups, dir.bias)
                .and_then(|jv| model.vjp(x, jv.view()));
            match out {
                Ok(mut back) => {
                    if !fit_intercept {
                        back.bias = 0.0;
                    }
                    back.to_flat() / n
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    Array1::zeros(v.len())
                }
            }
        },
        1e-8,
        10_000,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(lam * loss.curvature()),
    }
}

struct LinearCache {
    maps: Vec<Array2<f64>>,
}

impl LinearCache {
    fn new(model: &AdditiveModel, data: &Dataset) -> Result<Self> {
        Ok(LinearCache {
            maps: model.feature_maps(data.x.view())?,
        })
    }

    fn output(&self, params: &ParamSet) -> Array1<f64> {
        let mut h = Array1::from_elem(self.maps[0].nrows(), params.bias);
        for (g, theta) in self.maps.iter().zip(&params.groups) {
            h += &g.dot(theta);
        }
        h
    }

    fn loss_and_gradient(&self, params: &ParamSet, y: ArrayView1<f64>, loss: LossKind) -> (f64, ParamSet) {
        let h = self.output(params);
        let upstream = loss.derivative(h.view(), y);
        let grad = ParamSet {
            groups: self.maps.iter().map(|g| g.t().dot(&upstream)).collect(),
            bias: upstream.sum(),
        };
        (loss.value(h.view(), y), grad)
    }
}

fn check_inputs(model: &AdditiveModel, data: &Dataset, loss: LossKind, penalty: &PenaltySpec, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if model.p() != data.p() {
        return Err(SnamError::Shape(format!(
            "model has {} features, data has {}",
            model.p(),
            data.p()
        )));
    }
    if config.batch_size > data.n() {
        return Err(SnamError::Config(format!(
            "batch size {} exceeds the {} training samples",
            config.batch_size,
            data.n()
        )));
    }
    if loss == LossKind::CrossEntropy && data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(SnamError::Config("cross-entropy needs labels in {0, 1}".into()));
    }
    penalty.validate(model.p())?;
    if penalty.variant.is_sorted() && !config.optimizer.is_proximal() {
        return Err(SnamError::Unsupported(format!(
            "{:?} penalty cannot be trained with {:?}; use proxgd or fista",
            penalty.variant, config.optimizer
        )));
    }
    Ok(())
}

/// Train `model` on `data` and return it with the per-epoch history.
///
/// Each epoch visits the (optionally shuffled) samples in mini-batches of
/// `batch_size`; the proximal methods apply the prox after every mini-batch.
pub fn train(
    mut model: AdditiveModel,
    data: &Dataset,
    loss: LossKind,
    penalty: &PenaltySpec,
    config: &TrainConfig,
) -> Result<(AdditiveModel, TrainHistory)> {
    check_inputs(&model, data, loss, penalty, config)?;
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.n()).collect();
    let full_batch = config.batch_size == data.n() && !config.shuffle;
    // A frozen model is linear in its trainable parameters; on a fixed batch
    // its feature maps can be computed once.
    let cache = if full_batch && model.is_frozen() {
        Some(LinearCache::new(&model, data)?)
    } else {
        None
    };
    let mut sub_state = SubgradState::default();
    let mut fista_state = FistaState::default();
    let eta = config.learning_rate;
    let start = Instant::now();
    let mut probe = model.clone();

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let selected;
            let (xb, yb) = if full_batch {
                (data.x.view(), data.y.view())
            } else {
                selected = (data.x.select(Axis(0), rows), data.y.select(Axis(0), rows));
                (selected.0.view(), selected.1.view())
            };
            let diverged = |detail: String, group: Option<usize>| SnamError::Diverged {
                epoch,
                batch,
                group,
                detail,
            };
            let mut gradient = |at: &ParamSet| -> Result<ParamSet> {
                let (value, mut g) = match &cache {
                    Some(c) => c.loss_and_gradient(at, yb, loss),
                    None => {
                        probe.set_params(at)?;
                        probe.loss_and_gradient(xb, yb, loss)?
                    }
                };
                if !value.is_finite() || !g.is_finite() {
                    return Err(diverged(
                        format!("non-finite loss or gradient (loss = {value})"),
                        g.first_non_finite_group(),
                    ));
                }
                if !config.fit_intercept {
                    g.bias = 0.0;
                }
                Ok(g)
            };
            let current = model.params();
            let next = match config.optimizer {
                OptimizerKind::Proxgd => {
                    let g = gradient(&current)?;
                    proximal_step(&current, &g, penalty, eta)?
                }
                OptimizerKind::Fista => fista_step(&current, gradient, penalty, eta, &mut fista_state)?,
                _ => {
                    let g = gradient(&current)?;
                    let mut p = current;
                    subgradient_step(&mut p, &g, penalty, &mut sub_state, config)?;
                    p
                }
            };
            if !next.is_finite() {
                return Err(diverged("parameters became non-finite".into(), next.first_non_finite_group()));
            }
            model.set_params(&next)?;
        }
        let value = match &cache {
            Some(c) => loss.value(c.output(&model.params()).view(), data.y.view()),
            None => model.loss(data.x.view(), data.y.view(), loss)?,
        };
        let norms = group_norms(&model.trainable_groups());
        let objective = value + penalty.value_from_norms(&norms);
        if !objective.is_finite() {
            return Err(SnamError::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size).saturating_sub(1),
                group: None,
                detail: format!("non-finite objective at end of epoch (loss = {value})"),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            loss: value,
            objective,
            group_norms: norms,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: loss {value:.6} objective {objective:.6}");
    }
    Ok((model, history))
}
