//! Run configuration: a JSON file mirroring the command-line flags, with flags
//! taking precedence over the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use snam_core::spam::SpamConfig;
use snam_core::{OptimizerKind, PenaltyKind, PenaltySpec, SnamError, Task, TrainConfig, XDist};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelChoice {
    Snam,
    Nam,
    RfSnam,
    Lasso,
    Spam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum AdaptiveRef {
    Nam,
    Snam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub seed: u64,
    pub x_dist: XDist,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 3000,
            p: 24,
            sigma: 1.0,
            seed: 0,
            x_dist: XDist::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Everything one command needs. Exactly one of `data` and `synth` is set
/// after [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub target: String,
    pub standardize: bool,
    pub synth: Option<SynthConfig>,
    pub task: Task,
    pub model: ModelChoice,
    /// Hidden ReLU widths of each sub-network.
    pub hidden: Vec<usize>,
    pub penalty: PenaltySpec,
    pub adaptive_ref: Option<AdaptiveRef>,
    pub train: TrainConfig,
    /// Group-norm threshold for the selected support; the optimizer default when absent.
    pub tol: Option<f64>,
    pub spam: SpamConfig,
    pub split: SplitConfig,
    pub delta1: f64,
    pub delta2: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            target: "y".into(),
            standardize: false,
            synth: None,
            task: Task::Regression,
            model: ModelChoice::Snam,
            hidden: vec![100, 50],
            penalty: PenaltySpec::default(),
            adaptive_ref: None,
            train: TrainConfig::default(),
            tol: None,
            spam: SpamConfig::default(),
            split: SplitConfig::default(),
            delta1: 0.05,
            delta2: 0.05,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected two comma-separated numbers, got '{s}'")),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum TaskArg {
    Regression,
    Classification,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PenaltyArg {
    GroupLasso,
    GroupSlope,
    TwoLevelSlope,
    AdaptiveGroupLasso,
    GroupElasticNet,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Proxgd,
    Fista,
    #[value(alias = "subgrad")]
    SubgradPlain,
    SubgradMomentum,
    SubgradAdam,
}

/// Flags shared by every command. Each one overrides the matching field of `--config`.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV dataset with a header row.
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Target column of the CSV.
    #[arg(long)]
    pub target: Option<String>,
    /// z-score CSV features.
    #[arg(long)]
    pub standardize: bool,
    /// Generate the synthetic benchmark instead of reading a CSV.
    #[arg(long)]
    pub synth: bool,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Seed of the synthetic data.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Hidden widths, e.g. `100,50`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Nonincreasing group SLOPE sequence, one entry per feature.
    #[arg(long, value_delimiter = ',')]
    pub slope_seq: Option<Vec<f64>>,
    /// Two-level SLOPE `high,low`.
    #[arg(long, value_parser = parse_pair)]
    pub levels: Option<(f64, f64)>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Elastic net `λ1,λ2`.
    #[arg(long, value_parser = parse_pair)]
    pub en_pair: Option<(f64, f64)>,
    /// Adaptive weights, one per feature.
    #[arg(long, value_delimiter = ',')]
    pub adaptive_weights: Option<Vec<f64>>,
    /// Derive adaptive weights from a reference fit.
    #[arg(long, value_enum)]
    pub adaptive_ref: Option<AdaptiveRef>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed of model initialization and minibatch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Group-norm threshold for feature selection.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, SnamError> {
        serde_json::from_str(text).map_err(|e| SnamError::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, SnamError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SnamError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Reads `--config` if given, then applies every flag that was set.
    pub fn from_args(args: &RunArgs) -> Result<Self, SnamError> {
        let mut c = match &args.config {
            Some(path) => Self::from_file(path)?,
            None => RunConfig::default(),
        };
        c.apply(args);
        c.resolve()?;
        Ok(c)
    }

    fn apply(&mut self, a: &RunArgs) {
        if let Some(d) = &a.data {
            self.data = Some(d.clone());
            self.synth = None;
        }
        if let Some(t) = &a.target {
            self.target = t.clone();
        }
        if a.standardize {
            self.standardize = true;
        }
        let synth_flags = a.synth || a.n.is_some() || a.p.is_some() || a.sigma.is_some() || a.data_seed.is_some();
        if synth_flags {
            self.data = None;
            let s = self.synth.get_or_insert_with(SynthConfig::default);
            if let Some(n) = a.n {
                s.n = n;
            }
            if let Some(p) = a.p {
                s.p = p;
            }
            if let Some(v) = a.sigma {
                s.sigma = v;
            }
            if let Some(v) = a.data_seed {
                s.seed = v;
            }
        }
        if let Some(t) = a.task {
            self.task = match t {
                TaskArg::Regression => Task::Regression,
                TaskArg::Classification => Task::BinaryClassification,
            };
        }
        if let Some(m) = a.model {
            self.model = m;
        }
        if let Some(h) = &a.hidden {
            self.hidden = h.clone();
        }
        if let Some(p) = a.penalty {
            self.penalty.variant = match p {
                PenaltyArg::GroupLasso => PenaltyKind::GroupLasso,
                PenaltyArg::GroupSlope => PenaltyKind::GroupSlope,
                PenaltyArg::TwoLevelSlope => PenaltyKind::TwoLevelSlope,
                PenaltyArg::AdaptiveGroupLasso => PenaltyKind::AdaptiveGroupLasso,
                PenaltyArg::GroupElasticNet => PenaltyKind::GroupElasticNet,
            };
        }
        if let Some(l) = a.lambda {
            self.penalty.lambda = l;
            self.spam.lambda = l;
        }
        if let Some(s) = &a.slope_seq {
            self.penalty.slope_seq = s.clone();
        }
        if let Some(l) = a.levels {
            self.penalty.levels = l;
        }
        if let Some(k) = a.top_k {
            self.penalty.top_k = k;
        }
        if let Some(e) = a.en_pair {
            self.penalty.en_pair = e;
        }
        if let Some(w) = &a.adaptive_weights {
            self.penalty.adaptive_weights = w.clone();
        }
        if let Some(r) = a.adaptive_ref {
            self.adaptive_ref = Some(r);
        }
        if let Some(o) = a.optimizer {
            self.train.optimizer = match o {
                OptimizerArg::Proxgd => OptimizerKind::Proxgd,
                OptimizerArg::Fista => OptimizerKind::Fista,
                OptimizerArg::SubgradPlain => OptimizerKind::SubgradPlain,
                OptimizerArg::SubgradMomentum => OptimizerKind::SubgradMomentum,
                OptimizerArg::SubgradAdam => OptimizerKind::SubgradAdam,
            };
        }
        if let Some(v) = a.lr {
            self.train.learning_rate = v;
        }
        if let Some(v) = a.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = a.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = a.seed {
            self.train.seed = v;
        }
        if let Some(v) = a.tol {
            self.tol = Some(v);
        }
        if let Some(v) = a.train_fraction {
            self.split.train_fraction = v;
        }
        if let Some(v) = a.split_seed {
            self.split.seed = v;
        }
        if let Some(v) = a.max_sweeps {
            self.spam.max_sweeps = v;
        }
        if let Some(v) = a.delta1 {
            self.delta1 = v;
        }
        if let Some(v) = a.delta2 {
            self.delta2 = v;
        }
        if let Some(o) = &a.out {
            self.out = o.clone();
        }
    }

    /// Fills defaults that depend on other fields and rejects inconsistent settings.
    pub fn resolve(&mut self) -> Result<(), SnamError> {
        match (&self.data, &self.synth) {
            (Some(_), Some(_)) => {
                return Err(SnamError::Config("set either a CSV dataset or synthetic data, not both".into()))
            }
            (None, None) => self.synth = Some(SynthConfig::default()),
            _ => {}
        }
        if self.model == ModelChoice::Nam {
            // A NAM is an SNAM without a penalty.
            self.penalty = PenaltySpec::default();
            self.adaptive_ref = None;
        }
        if self.adaptive_ref.is_some() && self.penalty.variant != PenaltyKind::AdaptiveGroupLasso {
            return Err(SnamError::Config("--adaptive-ref needs --penalty adaptive_group_lasso".into()));
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                return Err(SnamError::Config(format!("support tolerance must be nonnegative, got {t}")));
            }
        }
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"train": {"epochs": 7, "learning_rate": 0.1}, "penalty": {"variant": "group_lasso", "lambda": 3.0}}"#).unwrap();
        let args = RunArgs {
            config: Some(path),
            epochs: Some(2),
            ..RunArgs::default()
        };
        let c = RunConfig::from_args(&args).unwrap();
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.learning_rate, 0.1);
        assert_eq!(c.penalty.lambda, 3.0);
        assert_eq!(c.synth, Some(SynthConfig::default()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"epoch": 3}"#), Err(SnamError::Config(_))));
    }

    #[test]
    fn nam_drops_the_penalty() {
        let args = RunArgs {
            model: Some(ModelChoice::Nam),
            lambda: Some(4.0),
            ..RunArgs::default()
        };
        let c = RunConfig::from_args(&args).unwrap();
        assert!(c.penalty.is_zero());
    }

    #[test]
    fn csv_and_synth_flags_conflict_in_file() {
        let mut c = RunConfig {
            data: Some("a.csv".into()),
            synth: Some(SynthConfig::default()),
            ..RunConfig::default()
        };
        assert!(c.resolve().is_err());
    }

    #[test]
    fn list_flags() {
        use clap::Parser;
        let cli = crate::Cli::try_parse_from(["snam", "train", "--hidden", "100,50", "--levels", "0.5,0.1"]).unwrap();
        let crate::Command::Train(args) = cli.command else { panic!() };
        assert_eq!(args.hidden, Some(vec![100, 50]));
        assert_eq!(args.levels, Some((0.5, 0.1)));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("1,x").is_err());
    }
}
