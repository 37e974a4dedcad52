//! The additive model `h(X) = Σ_j h_j(X_j) + β` and its variants.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sigmoid, Task};
use crate::error::{Result, SnamError};
use crate::metrics::SupportSet;
use crate::mlp::{with_output, LayerSpec, SubNetwork, Trace};
use crate::optim::LossKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Snam,
    Nam,
    RfSnam,
    Lasso,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveModel {
    pub subnets: Vec<SubNetwork>,
    pub bias: f64,
    pub task: Task,
    pub kind: ModelKind,
    pub seed: u64,
}

/// Trainable parameters (or a gradient / direction over them): one vector per
/// group plus the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub groups: Vec<Array1<f64>>,
    pub bias: f64,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            groups: other.groups.iter().map(|g| Array1::zeros(g.len())).collect(),
            bias: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Array1::len).sum::<usize>() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Concatenation of all groups followed by the intercept.
    pub fn to_flat(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.len());
        for g in &self.groups {
            out.extend(g.iter());
        }
        out.push(self.bias);
        Array1::from_vec(out)
    }

    /// Inverse of [`ParamSet::to_flat`] using `self` for the group sizes.
    pub fn from_flat_like(&self, flat: ArrayView1<f64>) -> ParamSet {
        let mut offset = 0;
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let part = flat.slice(ndarray::s![offset..offset + g.len()]).to_owned();
                offset += g.len();
                part
            })
            .collect();
        ParamSet {
            groups,
            bias: flat[offset],
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &ParamSet) -> ParamSet {
        ParamSet {
            groups: self
                .groups
                .iter()
                .zip(&other.groups)
                .map(|(a, b)| {
                    let mut out = a.clone();
                    out.scaled_add(alpha, b);
                    out
                })
                .collect(),
            bias: self.bias + alpha * other.bias,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.groups.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn first_non_finite_group(&self) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|v| !v.is_finite()))
    }
}

fn build(p: usize, arch: &[LayerSpec], seed: u64, task: Task, kind: ModelKind, frozen: bool) -> Result<AdditiveModel> {
    if p == 0 {
        return Err(SnamError::Config("an additive model needs at least one feature".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let subnets = (0..p)
        .map(|_| SubNetwork::init(arch, master.next_u64()).map(|s| s.with_frozen_hidden(frozen)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdditiveModel {
        subnets,
        bias: 0.0,
        task,
        kind,
        seed,
    })
}

/// `p` independently initialized sub-networks sharing the hidden architecture.
pub fn build_snam(p: usize, hidden: &[LayerSpec], seed: u64, task: Task) -> Result<AdditiveModel> {
    build(p, &with_output(hidden), seed, task, ModelKind::Snam, false)
}

/// SNAM without a penalty; the model itself is the same.
pub fn build_nam(p: usize, hidden: &[LayerSpec], seed: u64, task: Task) -> Result<AdditiveModel> {
    build(p, &with_output(hidden), seed, task, ModelKind::Nam, false)
}

/// Hidden layers frozen after initialization; only the output weights train.
pub fn build_rf_snam(p: usize, hidden: &[LayerSpec], seed: u64, task: Task) -> Result<AdditiveModel> {
    if hidden.is_empty() {
        return Err(SnamError::Config("a random-feature model needs at least one hidden layer".into()));
    }
    build(p, &with_output(hidden), seed, task, ModelKind::RfSnam, true)
}

/// One scalar weight per feature and no hidden layers: a linear model whose
/// group-lasso penalty is the ℓ1 norm. Weights start at zero.
pub fn build_lasso_model(p: usize, task: Task) -> Result<AdditiveModel> {
    let mut m = build(p, &[LayerSpec::identity(1)], 0, task, ModelKind::Lasso, false)?;
    for s in &mut m.subnets {
        s.unflatten(&[0.0])?;
    }
    Ok(m)
}

impl AdditiveModel {
    pub fn p(&self) -> usize {
        self.subnets.len()
    }

    pub fn arch(&self) -> &[LayerSpec] {
        self.subnets[0].arch()
    }

    pub fn is_frozen(&self) -> bool {
        self.subnets.iter().all(SubNetwork::frozen_hidden)
    }

    /// Trainable scalars across all groups plus the intercept.
    pub fn num_trainable(&self) -> usize {
        self.subnets.iter().map(SubNetwork::num_trainable).sum::<usize>() + 1
    }

    /// Trainable scalars in the nonzero groups plus the intercept.
    pub fn num_active_params(&self) -> usize {
        self.subnets
            .iter()
            .filter(|s| s.group_norm() > 0.0)
            .map(SubNetwork::num_trainable)
            .sum::<usize>()
            + 1
    }

    pub fn group_norms(&self) -> Vec<f64> {
        self.subnets.iter().map(SubNetwork::group_norm).collect()
    }

    pub fn trainable_groups(&self) -> Vec<Array1<f64>> {
        self.subnets.iter().map(SubNetwork::trainable_params).collect()
    }

    pub fn params(&self) -> ParamSet {
        ParamSet {
            groups: self.trainable_groups(),
            bias: self.bias,
        }
    }

    pub fn set_params(&mut self, params: &ParamSet) -> Result<()> {
        self.set_trainable_groups(&params.groups)?;
        self.bias = params.bias;
        Ok(())
    }

    pub fn set_trainable_groups(&mut self, groups: &[Array1<f64>]) -> Result<()> {
        if groups.len() != self.p() {
            return Err(SnamError::Shape(format!("expected {} groups, got {}", self.p(), groups.len())));
        }
        for (s, g) in self.subnets.iter_mut().zip(groups) {
            s.set_trainable_params(g.view())?;
        }
        Ok(())
    }

    fn check_columns(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.p() {
            return Err(SnamError::Shape(format!(
                "model has {} features, X has {} columns",
                self.p(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn traces(&self, x: ArrayView2<f64>) -> Result<Vec<Trace>> {
        self.check_columns(x)?;
        (0..self.p())
            .into_par_iter()
            .map(|j| self.subnets[j].trace(x.column(j)))
            .collect()
    }

    /// Entry `(i, j)` is `h_j(X_ij)`.
    pub fn shape_functions(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_columns(x)?;
        let cols = (0..self.p())
            .into_par_iter()
            .map(|j| self.subnets[j].forward(x.column(j)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros(x.dim());
        for (j, c) in cols.iter().enumerate() {
            out.column_mut(j).assign(c);
        }
        Ok(out)
    }

    /// Additive output before any link: `Σ_j h_j(X_j) + β`.
    pub fn raw_output(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let traces = self.traces(x)?;
        Ok(sum_outputs(&traces, x.nrows(), self.bias))
    }

    /// Regression: the additive output. Classification: probability of class 1.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let raw = self.raw_output(x)?;
        Ok(match self.task {
            Task::Regression => raw,
            Task::BinaryClassification => raw.mapv(sigmoid),
        })
    }

    pub fn selected_support(&self, tol: f64) -> SupportSet {
        SupportSet::from_norms(&self.group_norms(), tol)
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, loss: LossKind) -> Result<f64> {
        let h = self.raw_output(x)?;
        Ok(loss.value(h.view(), y))
    }

    /// Data-fit loss and its gradient with respect to the trainable parameters.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, loss: LossKind) -> Result<(f64, ParamSet)> {
        if y.len() != x.nrows() {
            return Err(SnamError::Shape(format!("X has {} rows, y has {}", x.nrows(), y.len())));
        }
        let traces = self.traces(x)?;
        let h = sum_outputs(&traces, x.nrows(), self.bias);
        let value = loss.value(h.view(), y);
        let upstream = loss.derivative(h.view(), y);
        Ok((value, self.vjp_from_traces(&traces, upstream.view())?))
    }

    /// Transposed Jacobian of the raw outputs applied to `upstream`.
    pub fn vjp(&self, x: ArrayView2<f64>, upstream: ArrayView1<f64>) -> Result<ParamSet> {
        let traces = self.traces(x)?;
        self.vjp_from_traces(&traces, upstream)
    }

    fn vjp_from_traces(&self, traces: &[Trace], upstream: ArrayView1<f64>) -> Result<ParamSet> {
        let groups = (0..self.p())
            .into_par_iter()
            .map(|j| {
                let g = self.subnets[j].backward_from_trace(&traces[j], upstream)?;
                Ok(g.values.slice(ndarray::s![g.trainable]).to_owned())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamSet {
            groups,
            bias: upstream.sum(),
        })
    }

    /// Jacobian of the raw outputs with respect to the trainable parameters,
    /// applied to a direction (`groups`, `bias`).
    pub fn jvp(&self, x: ArrayView2<f64>, groups: &[Array1<f64>], bias: f64) -> Result<Array1<f64>> {
        self.check_columns(x)?;
        let parts = (0..self.p())
            .into_par_iter()
            .map(|j| self.subnets[j].jvp(x.column(j), groups[j].view()))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array1::from_elem(x.nrows(), bias);
        for part in &parts {
            out += part;
        }
        Ok(out)
    }

    /// Feature maps `G_j` of every sub-network on its column of `x`.
    pub fn feature_maps(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_columns(x)?;
        (0..self.p())
            .into_par_iter()
            .map(|j| self.subnets[j].feature_map(x.column(j)))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            kind: self.kind,
            p: self.p(),
            task: self.task,
            seed: self.seed,
            arch: self.arch().to_vec(),
            frozen_hidden: self.is_frozen(),
            param_count: self.subnets.iter().map(SubNetwork::num_params).sum::<usize>() + 1,
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + header_bytes.len() + 8 * header.param_count);
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header_bytes);
        for s in &self.subnets {
            for v in s.flatten().values.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.extend_from_slice(&self.bias.to_le_bytes());
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| SnamError::Config(format!("invalid checkpoint: {msg}"));
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end])?;
        let payload = &bytes[header_end..];
        if payload.len() != 8 * header.param_count {
            return Err(bad("payload length does not match param_count"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut model = build(header.p, &header.arch, header.seed, header.task, header.kind, header.frozen_hidden)?;
        let per = model.subnets[0].num_params();
        if per * header.p + 1 != header.param_count {
            return Err(bad("param_count does not match the architecture"));
        }
        for (j, s) in model.subnets.iter_mut().enumerate() {
            s.unflatten(&values[j * per..(j + 1) * per])?;
        }
        model.bias = values[values.len() - 1];
        Ok(model)
    }
}

fn sum_outputs(traces: &[Trace], n: usize, bias: f64) -> Array1<f64> {
    let mut h = Array1::from_elem(n, bias);
    for t in traces {
        h += &t.output();
    }
    h
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SNAMCKPT";
const CHECKPOINT_FORMAT: &str = "snam-checkpoint";

/// JSON header of a checkpoint. The file is the 8-byte magic `SNAMCKPT`, the
/// header length as a little-endian u64, the UTF-8 header, then `param_count`
/// little-endian f64 values: each sub-network's flattened parameters in
/// feature order followed by the intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub p: usize,
    pub task: Task,
    pub seed: u64,
    pub arch: Vec<LayerSpec>,
    pub frozen_hidden: bool,
    pub param_count: usize,
}

/// Per-sample sum over feature columns.
pub fn row_sums(m: ArrayView2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(1))
}
