//! Sparse neural additive models.
//!
//! An additive model predicts `β + Σ_j h_j(x_j)` with one small ReLU network per
//! input feature. Training under a group-sparsity penalty on each sub-network's
//! parameters removes whole features at once, which gives the model feature
//! selection on top of the per-feature interpretability of additive models.
//!
//! The crate also carries the baselines and diagnostics used to evaluate such
//! models: a LASSO special case, the SPAM backfitting smoother, synthetic
//! benchmark generators, support/identification metrics and numerical checks of
//! the support-recovery and slow-rate guarantees for the random-feature regime.

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod penalty;
pub mod spam;
pub mod theory;

pub use data::{Dataset, Task, TruthModel, XDist};
pub use error::{Result, SnamError};
pub use metrics::{EvalReport, SupportSet};
pub use mlp::{Activation, LayerSpec, ParamGroup, SubNetwork};
pub use model::{AdditiveModel, ModelKind};
pub use optim::{LossKind, OptimizerKind, TrainConfig, TrainHistory};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use spam::{SpamConfig, SpamModel};
pub use theory::TheoryReport;
