//! Experiment configuration: a TOML file with top-level run keys and
//! `[data]`, `[model]`, `[train]` and `[lr]` sections. Unknown keys are errors.

use std::path::{Path, PathBuf};

use adl::data::{gen_linreg, gen_two_spirals, Dataset};
use adl::net::{LayerSpec, LossKind};
use adl::optimizer::{scaled_base_lr, LrSchedule, SgdConfig};
use adl::partition::{parameter_costs, partition_by_cost, partition_even, Partition};
use adl::scheduler::{ExecutionMode, TrainConfig, DIVERGENCE_THRESHOLD};
use adl::staleness::{rational_to_f64, total_averaged_los};
use adl::{Error, Result};
use serde::Deserialize;

/// Environment variable naming the directory that holds run outputs when
/// the config has no `out_path`.
pub const OUT_DIR_ENV: &str = "ADL_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    AdlClocked,
    AdlParallel,
    SyncGa,
    DelayedReplay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceLevel {
    #[default]
    Updates,
    Ticks,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub out_path: Option<PathBuf>,
    #[serde(default)]
    pub trace_level: TraceLevel,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    pub lr: LrSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    Linreg,
    TwoSpirals,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dataset: DatasetId,
    pub n: usize,
    /// Feature count; linear regression only.
    pub dim: Option<usize>,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossId {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// One entry per layer: `"affine IN OUT"`, `"tanh DIM"`, `"relu DIM"` or `"identity DIM"`.
    pub layers: Vec<String>,
    pub loss: LossId,
    /// Split size `K`.
    #[serde(default = "one")]
    pub splits: usize,
    /// `"even"`, `"cost"` (balance parameter counts) or explicit module sizes.
    #[serde(default)]
    pub partition: PartitionChoice,
    #[serde(default)]
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum PartitionChoice {
    Named(String),
    Sizes(Vec<usize>),
}

impl Default for PartitionChoice {
    fn default() -> Self {
        PartitionChoice::Named("even".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "one")]
    pub accumulation: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_updates")]
    pub updates: usize,
    #[serde(default)]
    pub sampler_seed: u64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_threshold")]
    pub divergence_threshold: f64,
    /// Seconds a parallel worker waits for a message before reporting deadlock.
    #[serde(default = "default_timeout")]
    pub deadlock_timeout_secs: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            accumulation: 1,
            batch_size: default_batch(),
            updates: default_updates(),
            sampler_seed: 0,
            momentum: 0.0,
            weight_decay: 0.0,
            divergence_threshold: default_threshold(),
            deadlock_timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleId {
    Constant,
    StepDecay,
    Harmonic,
    Balanced,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSection {
    pub schedule: ScheduleId,
    /// Constant rate.
    pub lr: Option<f64>,
    /// Step-decay base rate; defaults to `0.1 · b · M / 256`.
    pub base: Option<f64>,
    #[serde(default)]
    pub milestones: Vec<f64>,
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default)]
    pub warmup_epochs: f64,
    /// Harmonic numerator.
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub grad_bound: Option<f64>,
    pub lipschitz: Option<f64>,
    pub initial_gap: Option<f64>,
}

fn one() -> usize {
    1
}
fn default_batch() -> usize {
    32
}
fn default_updates() -> usize {
    100
}
fn default_threshold() -> f64 {
    DIVERGENCE_THRESHOLD
}
fn default_timeout() -> f64 {
    60.0
}
fn default_factor() -> f64 {
    0.1
}

fn required(value: Option<f64>, key: &str, schedule: &str) -> Result<f64> {
    value.ok_or_else(|| Error::Config(format!("[lr] schedule \"{schedule}\" needs `{key}`")))
}

pub fn parse_layer(text: &str) -> Result<LayerSpec> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Config(format!("layer \"{text}\": `{s}` is not a dimension")))
    };
    let spec = match parts.as_slice() {
        ["affine", i, o] => LayerSpec::affine(dim(i)?, dim(o)?),
        ["tanh", d] => LayerSpec::tanh(dim(d)?),
        ["relu", d] => LayerSpec::relu(dim(d)?),
        ["identity", d] => LayerSpec::identity(dim(d)?),
        _ => {
            return Err(Error::Config(format!(
                "layer \"{text}\": expected `affine IN OUT`, `tanh DIM`, `relu DIM` or `identity DIM`"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Directory for outputs: `out_path`, else `$ADL_OUT_DIR/<stem>`, else `adl-out/<stem>`.
    pub fn output_dir(&self, config_path: &Path) -> PathBuf {
        if let Some(p) = &self.out_path {
            return p.clone();
        }
        let stem = config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let root = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("adl-out"));
        root.join(stem)
    }

    pub fn dataset(&self) -> Result<Dataset<f64>> {
        let d = &self.data;
        match d.dataset {
            DatasetId::Linreg => {
                let dim = d
                    .dim
                    .ok_or_else(|| Error::Config("[data] dataset \"linreg\" needs `dim`".into()))?;
                gen_linreg(d.n, dim, d.noise_std, d.seed)
            }
            DatasetId::TwoSpirals => {
                if d.dim.is_some_and(|dim| dim != 2) {
                    return Err(Error::Config("[data] two-spirals data is 2-dimensional".into()));
                }
                gen_two_spirals(d.n, d.noise_std, d.seed)
            }
        }
    }

    fn partition(&self, layers: &[LayerSpec]) -> Result<Partition> {
        let splits = self.model.splits;
        let partition = match &self.model.partition {
            PartitionChoice::Named(name) if name == "even" => partition_even(layers.len(), splits)?,
            PartitionChoice::Named(name) if name == "cost" => {
                partition_by_cost(&parameter_costs(layers), splits)?
            }
            PartitionChoice::Named(other) => {
                return Err(Error::Config(format!(
                    "[model] partition \"{other}\": expected \"even\", \"cost\" or a list of module sizes"
                )))
            }
            PartitionChoice::Sizes(sizes) => Partition::from_sizes(sizes)?,
        };
        if partition.num_modules() != splits {
            return Err(Error::Config(format!(
                "[model] partition has {} modules but splits = {splits}",
                partition.num_modules()
            )));
        }
        Ok(partition)
    }

    fn schedule(&self, layers_partition: &Partition) -> Result<LrSchedule> {
        let lr = &self.lr;
        let t = &self.train;
        let schedule = match lr.schedule {
            ScheduleId::Constant => LrSchedule::Constant {
                lr: required(lr.lr, "lr", "constant")?,
            },
            ScheduleId::StepDecay => LrSchedule::StepDecay {
                base: lr.base.unwrap_or_else(|| scaled_base_lr(t.batch_size, t.accumulation)),
                milestones: lr.milestones.clone(),
                factor: lr.factor,
                warmup_epochs: lr.warmup_epochs,
            },
            ScheduleId::Harmonic => LrSchedule::Harmonic {
                c: required(lr.c, "c", "harmonic")?,
            },
            ScheduleId::Balanced => {
                let staleness_sum = total_averaged_los(
                    layers_partition.num_modules() as u64,
                    t.accumulation as u64,
                )?;
                LrSchedule::ConstantTheoretical {
                    epsilon: lr.epsilon.unwrap_or(1.0),
                    grad_bound: required(lr.grad_bound, "grad_bound", "balanced")?,
                    lipschitz: required(lr.lipschitz, "lipschitz", "balanced")?,
                    initial_gap: required(lr.initial_gap, "initial_gap", "balanced")?,
                    updates: t.updates as u64,
                    accumulation: t.accumulation as u64,
                    staleness_sum: rational_to_f64(staleness_sum),
                }
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Validated training configuration; nothing is computed before this succeeds.
    pub fn train_config(&self) -> Result<TrainConfig<f64>> {
        let layers = self
            .model
            .layers
            .iter()
            .map(|l| parse_layer(l))
            .collect::<Result<Vec<_>>>()?;
        if layers.is_empty() {
            return Err(Error::Config("[model] layers is empty".into()));
        }
        let partition = self.partition(&layers)?;
        let loss = match self.model.loss {
            LossId::Mse => LossKind::MeanSquaredError,
            LossId::CrossEntropy => LossKind::SoftmaxCrossEntropy,
        };
        let schedule = self.schedule(&partition)?;
        let t = &self.train;
        if !(t.deadlock_timeout_secs > 0.0) || !t.deadlock_timeout_secs.is_finite() {
            return Err(Error::Config("[train] deadlock_timeout_secs must be positive".into()));
        }
        if !(t.divergence_threshold > 0.0) {
            return Err(Error::Config("[train] divergence_threshold must be positive".into()));
        }
        let mut config = TrainConfig::new(layers, partition, loss, schedule);
        config.accumulation = t.accumulation;
        config.batch_size = t.batch_size;
        config.updates = t.updates;
        config.sgd = SgdConfig {
            momentum: t.momentum,
            weight_decay: t.weight_decay,
        };
        config.init_seed = self.model.init_seed;
        config.sampler_seed = t.sampler_seed;
        config.mode = match self.mode {
            Mode::AdlParallel => ExecutionMode::Parallel,
            _ => ExecutionMode::Clocked,
        };
        config.record_events = self.trace_level == TraceLevel::Ticks;
        config.divergence_threshold = t.divergence_threshold;
        config.deadlock_timeout = std::time::Duration::from_secs_f64(t.deadlock_timeout_secs);
        config.validate()?;
        Ok(config)
    }
}
