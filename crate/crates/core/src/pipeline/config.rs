//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::embedding::ClassifierConfig;
use crate::error::{Error, Result};
use crate::masking::{MaskSpec, MaskStrategy};
use crate::noise::TripletConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "1")]
    Task1,
    #[serde(rename = "2")]
    Task2,
    #[serde(rename = "3")]
    Task3,
    #[serde(rename = "4")]
    Task4,
    #[serde(rename = "5-train")]
    Task5Train,
    #[serde(rename = "5-eval")]
    Task5Eval,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Task1 => "1",
            Task::Task2 => "2",
            Task::Task3 => "3",
            Task::Task4 => "4",
            Task::Task5Train => "5-train",
            Task::Task5Eval => "5-eval",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One report per named mask.
    OneAtATime,
    /// One report with the union of every frame's feature masks.
    AllTogether,
}

/// Where perturbed frames are exchanged with an external embedding provider.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub request_dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_poll")]
    pub poll_millis: u64,
}

fn default_timeout() -> f64 {
    600.0
}

fn default_poll() -> u64 {
    50
}

/// Triplet hyperparameters as written in a config file. The seed falls back
/// to the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletSettings {
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_per_class")]
    pub triplets_per_class_per_epoch: usize,
    #[serde(default = "d_init")]
    pub noise_init_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn d_margin() -> f64 {
    TripletConfig::default().margin
}
fn d_lr() -> f64 {
    TripletConfig::default().learning_rate
}
fn d_epochs() -> usize {
    TripletConfig::default().epochs
}
fn d_per_class() -> usize {
    TripletConfig::default().triplets_per_class_per_epoch
}
fn d_init() -> f64 {
    TripletConfig::default().noise_init_scale
}

impl Default for TripletSettings {
    fn default() -> Self {
        let d = TripletConfig::default();
        Self {
            margin: d.margin,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            triplets_per_class_per_epoch: d.triplets_per_class_per_epoch,
            noise_init_scale: d.noise_init_scale,
            seed: None,
        }
    }
}

impl TripletSettings {
    pub fn resolve(&self, run_seed: u64) -> TripletConfig {
        TripletConfig {
            margin: self.margin,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            triplets_per_class_per_epoch: self.triplets_per_class_per_epoch,
            seed: self.seed.unwrap_or(run_seed),
            noise_init_scale: self.noise_init_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Candidate label subset; when absent every class with a text embedding competes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<ClassId>>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Task 2 strategy (random_pixel or random_shape) and shape bound; its
    /// fraction is replaced by each entry of `fractions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSpec>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_mode: Option<FeatureMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet: Option<TripletSettings>,
    /// Draw triplet negatives in proportion to baseline confusions on the train split.
    #[serde(default = "default_true")]
    pub hard_negatives: bool,
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_fractions() -> Vec<f64> {
    vec![0.10, 0.30, 0.50]
}

fn default_true() -> bool {
    true
}

fn default_eval_fraction() -> f64 {
    0.2
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn mask_seed(&self) -> u64 {
        self.mask.as_ref().and_then(|m| m.seed).unwrap_or(self.seed)
    }

    pub fn triplet_config(&self) -> TripletConfig {
        self.triplet.clone().unwrap_or_default().resolve(self.seed)
    }

    pub fn random_strategy(&self) -> MaskStrategy {
        self.mask
            .as_ref()
            .map(|m| m.strategy)
            .unwrap_or(MaskStrategy::RandomPixel)
    }

    /// Checks fields required by `task` and general value ranges.
    pub fn validate_for(&self, task: Task) -> Result<()> {
        self.classifier.validate()?;
        if let Some(labels) = &self.labels {
            if labels.len() < 2 {
                return Err(Error::Config(
                    "a label subset needs at least 2 entries".into(),
                ));
            }
            let mut sorted = labels.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != labels.len() {
                return Err(Error::Config("label subset has duplicates".into()));
            }
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::Config(format!(
                "eval_fraction must lie in [0, 1), got {}",
                self.eval_fraction
            )));
        }
        match task {
            Task::Task2 => {
                if self.fractions.is_empty() {
                    return Err(Error::Config(
                        "task 2 needs at least one masking fraction".into(),
                    ));
                }
                for &p in &self.fractions {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidFraction(p));
                    }
                }
                match self.random_strategy() {
                    MaskStrategy::RandomPixel | MaskStrategy::RandomShape => {}
                    other => {
                        return Err(Error::Config(format!(
                            "task 2 needs a random strategy, got {other:?}"
                        )))
                    }
                }
            }
            Task::Task3 => {
                if self.feature_mode.is_none() {
                    return Err(Error::Config("task 3 needs feature_mode".into()));
                }
            }
            Task::Task5Train => self.triplet_config().validate()?,
            Task::Task5Eval => {
                if self.dictionary.is_none() {
                    return Err(Error::Config("task 5 eval needs a dictionary path".into()));
                }
            }
            Task::Task1 | Task::Task4 => {}
        }
        Ok(())
    }
}
