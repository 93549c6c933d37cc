//! TOML experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use wola_core::aggregation::Aggregator;
use wola_core::attacks::{Attack, FOE_DEFAULT_EPSILON};
use wola_core::data::{LabelDistribution, PartitionMode};
use wola_core::model::{Activation, ModelKind, ModelSpec};
use wola_core::objective::ObjectiveMode;
use wola_core::preagg::PreAggregator;
use wola_core::training::{ClipTarget, LossSetting, LrSchedule, StepConfig};

use crate::error::{config_err, io_err, Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Total number of workers, Byzantine included.
    pub n: usize,
    /// Number of Byzantine workers.
    pub f: usize,
    /// Robustness parameter given to the aggregator; defaults to `f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_f: Option<usize>,
    /// Dirichlet concentration of the label skew.
    pub alpha: f64,
    #[serde(default = "default_partition")]
    pub partition: String,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default = "default_loss_mode")]
    pub loss_mode: String,
    #[serde(default = "default_objective")]
    pub objective: String,
    /// The distribution used when `objective = "provided"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_q: Option<Vec<f64>>,
    pub aggregator: String,
    #[serde(default = "default_none")]
    pub preagg: String,
    #[serde(default)]
    pub attack: AttackConfig,
    pub optimizer: OptimizerConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Fill `wall_clock_ms`; output is then no longer reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs; a training pool and an independent balanced test set.
    Synthetic {
        num_classes: usize,
        feature_dim: usize,
        samples_per_class: usize,
        #[serde(default = "default_separation")]
        class_separation: f64,
        #[serde(default = "default_test_per_class")]
        test_samples_per_class: usize,
    },
    Csv {
        /// Relative paths resolve against the config file's directory.
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<String>,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `softmax` or `mlp`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub name: String,
    /// ALIE multiplier; derived from `n` and `f` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// FOE scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            name: default_none(),
            z: None,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub rounds: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default = "default_clip_target")]
    pub clip_target: String,
    #[serde(default)]
    pub l2_reg: f64,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant { lr: f64 },
    /// `lr / (1 + ⌊t / period⌋)`
    InverseStep { lr: f64, period: usize },
    TwoPhase { hi: f64, lo: f64, switch: usize },
}

fn default_partition() -> String {
    "equal_size".into()
}
fn default_loss_mode() -> String {
    "standard".into()
}
fn default_objective() -> String {
    "global".into()
}
fn default_none() -> String {
    "none".into()
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_separation() -> f64 {
    3.0
}
fn default_test_per_class() -> usize {
    200
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_batch() -> usize {
    32
}
fn default_beta() -> f64 {
    0.9
}
fn default_clip_target() -> String {
    "gradient".into()
}

/// Config fields converted to the library's types.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub declared_f: usize,
    pub partition: PartitionMode,
    pub loss: LossSetting,
    pub objective: ObjectiveMode,
    pub provided: Option<LabelDistribution>,
    pub aggregator: Aggregator,
    pub preagg: PreAggregator,
    pub attack: Attack,
    pub step: StepConfig,
    pub schedule: LrSchedule,
}

fn parse_field<T: FromStr<Err = wola_core::Error>>(field: &str, value: &str) -> Result<T> {
    value.parse().map_err(|e: wola_core::Error| config_err(field, e))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative dataset paths are
    /// rewritten against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let DatasetConfig::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<root>", e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("n", "must be at least 1"));
        }
        if 2 * self.f >= self.n {
            return Err(config_err(
                "f",
                format!("threat model requires f < n/2, got n = {}, f = {}", self.n, self.f),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(config_err("alpha", "must be positive and finite"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed is required"));
        }
        if self.optimizer.rounds == 0 {
            return Err(config_err("optimizer.rounds", "must be at least 1"));
        }
        match &self.dataset {
            DatasetConfig::Synthetic {
                num_classes,
                feature_dim,
                samples_per_class,
                class_separation,
                test_samples_per_class,
            } => {
                if *num_classes < 2 {
                    return Err(config_err("dataset.num_classes", "must be at least 2"));
                }
                if *feature_dim == 0 {
                    return Err(config_err("dataset.feature_dim", "must be at least 1"));
                }
                if *samples_per_class == 0 || *test_samples_per_class == 0 {
                    return Err(config_err("dataset.samples_per_class", "must be at least 1"));
                }
                if !(*class_separation > 0.0) {
                    return Err(config_err("dataset.class_separation", "must be positive"));
                }
            }
            DatasetConfig::Csv { train_fraction, .. } => {
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(config_err("dataset.train_fraction", "must lie in (0, 1)"));
                }
            }
        }
        let r = self.resolve()?;
        if 2 * r.declared_f >= self.n {
            return Err(config_err("declared_f", "must be below n/2"));
        }
        if self.f > 0 && r.attack == Attack::None {
            return Err(config_err("attack.name", "f > 0 needs an attack"));
        }
        if r.objective == ObjectiveMode::Provided && r.provided.is_none() {
            return Err(config_err("objective_q", "objective 'provided' needs objective_q"));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let partition = match self.partition.as_str() {
            "equal_size" => PartitionMode::EqualSize,
            "per_class" => PartitionMode::PerClass,
            other => {
                return Err(config_err(
                    "partition",
                    format!("unknown partition '{other}' (equal_size | per_class)"),
                ))
            }
        };
        let attack = match parse_field::<Attack>("attack.name", &self.attack.name)? {
            Attack::Alie { .. } => Attack::Alie { z: self.attack.z },
            Attack::Foe { .. } => Attack::Foe {
                epsilon: self.attack.epsilon.unwrap_or(FOE_DEFAULT_EPSILON),
            },
            other => other,
        };
        let provided = self
            .objective_q
            .as_ref()
            .map(|q| LabelDistribution::new(q.clone()))
            .transpose()
            .map_err(|e| config_err("objective_q", e))?;
        let o = &self.optimizer;
        let step = StepConfig {
            batch_size: o.batch_size,
            beta: o.beta,
            clip: o.clip,
            clip_target: parse_field::<ClipTarget>("optimizer.clip_target", &o.clip_target)?,
            l2_reg: o.l2_reg,
        };
        step.validate().map_err(|e| config_err("optimizer", e))?;
        let schedule = match o.schedule {
            ScheduleConfig::Constant { lr } => LrSchedule::Constant { base: lr },
            ScheduleConfig::InverseStep { lr, period } => LrSchedule::InverseStep { base: lr, period },
            ScheduleConfig::TwoPhase { hi, lo, switch } => LrSchedule::TwoPhase { hi, lo, switch },
        };
        schedule
            .validate()
            .map_err(|e| config_err("optimizer.schedule", e))?;
        self.model_kind()?;
        Ok(Resolved {
            declared_f: self.declared_f.unwrap_or(self.f),
            partition,
            loss: parse_field("loss_mode", &self.loss_mode)?,
            objective: parse_field("objective", &self.objective)?,
            provided,
            aggregator: parse_field("aggregator", &self.aggregator)?,
            preagg: parse_field("preagg", &self.preagg)?,
            attack,
            step,
            schedule,
        })
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        match self.model.kind.as_str() {
            "softmax" => Ok(ModelKind::SoftmaxRegression),
            "mlp" => {
                let hidden_dim = self
                    .model
                    .hidden_dim
                    .filter(|&h| h > 0)
                    .ok_or_else(|| config_err("model.hidden_dim", "mlp needs hidden_dim >= 1"))?;
                let activation = match &self.model.activation {
                    Some(a) => parse_field::<Activation>("model.activation", a)?,
                    None => Activation::Relu,
                };
                Ok(ModelKind::Mlp {
                    hidden_dim,
                    activation,
                })
            }
            other => Err(config_err("model.kind", format!("unknown model '{other}' (softmax | mlp)"))),
        }
    }

    pub fn model_spec(&self, feature_dim: usize, num_classes: usize) -> Result<ModelSpec> {
        Ok(ModelSpec {
            kind: self.model_kind()?,
            feature_dim,
            num_classes,
        })
    }

    /// A copy with the dotted field `axis` set to `value`. The value is read
    /// as an integer, a float, a boolean or else a string; integers are
    /// widened when the field currently holds a float.
    pub fn with_field(&self, axis: &str, value: &str) -> Result<Self> {
        let path = canonical_axis(axis);
        let mut root = toml::Value::try_from(self).map_err(|e| config_err(axis, e))?;
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys.split_last().ok_or_else(|| config_err(axis, "empty axis"))?;
        let mut table = root.as_table_mut().expect("config serializes to a table");
        for k in parents {
            table = table
                .get_mut(*k)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| config_err(axis, "unknown axis"))?;
        }
        let mut v = parse_scalar(value);
        if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (table.get(*last), &v) {
            v = toml::Value::Float(*i as f64);
        }
        table.insert((*last).to_string(), v);
        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| {
            let msg = e.to_string();
            if msg.contains("unknown field") {
                config_err(axis, "unknown axis")
            } else {
                config_err(axis, msg)
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Short axis names accepted by `sweep`.
fn canonical_axis(axis: &str) -> &str {
    match axis {
        "attack" => "attack.name",
        "model" => "model.kind",
        "beta" => "optimizer.beta",
        "batch_size" => "optimizer.batch_size",
        "rounds" => "optimizer.rounds",
        "clip" => "optimizer.clip",
        "l2_reg" => "optimizer.l2_reg",
        other => other,
    }
}

fn parse_scalar(s: &str) -> toml::Value {
    if let Ok(i) = s.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(x) = s.parse::<f64>() {
        toml::Value::Float(x)
    } else if let Ok(b) = s.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(s.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n = 5
f = 0
alpha = 1.0
aggregator = "mean"
seeds = [1]

[dataset]
kind = "synthetic"
num_classes = 3
feature_dim = 4
samples_per_class = 50

[model]
kind = "softmax"

[optimizer]
rounds = 50

[optimizer.schedule]
kind = "constant"
lr = 0.1
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.declared_f, 0);
        assert_eq!(r.partition, PartitionMode::EqualSize);
        assert_eq!(r.loss, LossSetting::Standard);
        assert_eq!(r.attack, Attack::None);
        assert_eq!(r.step.batch_size, 32);
        assert_eq!(r.step.beta, 0.9);
        assert_eq!(r.schedule, LrSchedule::Constant { base: 0.1 });
    }

    #[test]
    fn round_trip_is_canonical() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn threat_model_violation_names_the_constraint() {
        let text = MINIMAL.replace("f = 0", "f = 3").replace("seeds", "attack = { name = \"sf\" }\nseeds");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("`f`") && err.contains("f < n/2"), "{err}");
    }

    #[test]
    fn unknown_names_are_field_level_errors() {
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("\"mean\"", "\"avg\"")).unwrap_err();
        assert!(err.to_string().contains("`aggregator`"), "{err}");
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("f = 0", "f = 1")).unwrap_err();
        assert!(err.to_string().contains("`attack.name`"), "{err}");
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("seeds = [1]", "seeds = []")).unwrap_err();
        assert!(err.to_string().contains("`seeds`"), "{err}");
    }

    #[test]
    fn with_field_sets_dotted_and_aliased_paths() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.with_field("alpha", "3").unwrap().alpha, 3.0);
        assert_eq!(cfg.with_field("aggregator", "cwmed").unwrap().aggregator, "cwmed");
        assert_eq!(cfg.with_field("beta", "0.99").unwrap().optimizer.beta, 0.99);
        let err = cfg.with_field("nonsense", "1").unwrap_err().to_string();
        assert!(err.contains("unknown axis"), "{err}");
        assert!(cfg.with_field("optimizer.nope", "1").is_err());
        assert!(cfg.with_field("f", "3").is_err());
    }
}
