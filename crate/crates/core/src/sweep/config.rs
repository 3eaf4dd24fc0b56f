use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::Variant;
use crate::augment::{PairMode, DEFAULT_MEMORY_BUDGET};
use crate::error::{Error, Result};
use crate::nnet::{LossKind, LrSchedule, OptimConfig, OptimizerKind, TrainConfig};
use crate::rng::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LinregSample,
    MlpWidth,
    Epochwise,
    Biasvar,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::LinregSample => "linreg-sample",
            ExperimentKind::MlpWidth => "mlp-width",
            ExperimentKind::Epochwise => "epochwise",
            ExperimentKind::Biasvar => "biasvar",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Gaussian mixture; needs no files.
    Mixture,
    /// IDX image/label files.
    Idx,
}

/// Flat experiment configuration. Every field has a default; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub experiment: ExperimentKind,
    /// Prefix for the `experiment_id` column; empty means the kind name.
    pub experiment_id: String,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub num_seeds: usize,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
    pub out_dir: PathBuf,

    // linear regression
    pub dim: usize,
    pub sigma: f64,
    pub n_grid: Vec<usize>,
    pub n_test: usize,
    pub memory_budget_bytes: u64,

    // classification data
    pub dataset: DatasetKind,
    pub n_train: usize,
    pub classes: usize,
    pub separation: f64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub standardize: bool,
    pub label_noise: f64,

    // networks and training
    pub widths: Vec<usize>,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// 0 disables step decay.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub e_mult: usize,

    // bias-variance
    pub splits: usize,
    pub split_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            experiment: ExperimentKind::MlpWidth,
            experiment_id: String::new(),
            variants: vec![Variant::Standard, Variant::Concat],
            seed: 0,
            num_seeds: 3,
            threads: 1,
            out_dir: PathBuf::from("ddlab-out"),

            dim: 30,
            sigma: 0.1,
            n_grid: (1..=50).map(|k| 2 * k).collect(),
            n_test: 10_000,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET as u64,

            dataset: DatasetKind::Mixture,
            n_train: 1000,
            classes: 10,
            separation: 3.0,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            standardize: false,
            label_noise: 0.0,

            widths: vec![1, 2, 4, 8, 16, 32, 64],
            loss: LossKind::CrossEntropy,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            lr_decay_every: 0,
            lr_decay_factor: 0.1,
            batch_size: 100,
            epochs: 100,
            e_mult: 1,

            splits: 5,
            split_size: 200,
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Names of every accepted key.
    pub fn known_keys() -> Vec<String> {
        match serde_json::to_value(SweepConfig::default()).expect("config serializes") {
            serde_json::Value::Object(map) => map.keys().cloned().collect(),
            _ => unreachable!("config is a struct"),
        }
    }

    pub fn id(&self) -> String {
        if self.experiment_id.is_empty() {
            self.experiment.as_str().to_string()
        } else {
            self.experiment_id.clone()
        }
    }

    /// Per-trial seeds `mix(seed, t)` for `t` in `0..num_seeds`.
    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.num_seeds as u64)
            .map(|t| mix(self.seed, t))
            .collect()
    }

    pub fn pair_mode(&self) -> PairMode {
        match self.loss {
            LossKind::Bce => PairMode::MultiHot,
            LossKind::CrossEntropy | LossKind::Mse => PairMode::Averaged,
        }
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
            schedule: if self.lr_decay_every == 0 {
                LrSchedule::Constant
            } else {
                LrSchedule::StepDecay {
                    factor: self.lr_decay_factor,
                    every: self.lr_decay_every,
                }
            },
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss: self.loss,
            optimizer: self.optim_config(),
            e_mult: self.e_mult,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.variants.is_empty() {
            return bad("variants must be nonempty".into());
        }
        if self.num_seeds == 0 {
            return bad("num_seeds must be >= 1".into());
        }
        match self.experiment {
            ExperimentKind::LinregSample => {
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return bad("n_grid must be nonempty with entries >= 1".into());
                }
                if self.dim == 0 || self.n_test == 0 {
                    return bad("dim and n_test must be >= 1".into());
                }
                if !(self.sigma >= 0.0) {
                    return bad(format!("sigma {} must be >= 0", self.sigma));
                }
            }
            ExperimentKind::MlpWidth | ExperimentKind::Epochwise | ExperimentKind::Biasvar => {
                if self.widths.is_empty() || self.widths.contains(&0) {
                    return bad("widths must be nonempty with entries >= 1".into());
                }
                if !(0.0..=1.0).contains(&self.label_noise) {
                    return bad(format!("label_noise {} outside [0, 1]", self.label_noise));
                }
                if self.n_train == 0 {
                    return bad("n_train must be >= 1".into());
                }
                match self.dataset {
                    DatasetKind::Mixture => {
                        if self.dim == 0 || self.classes < 2 || self.n_train < self.classes {
                            return bad(
                                "mixture needs dim >= 1, classes >= 2, n_train >= classes".into()
                            );
                        }
                        if !(self.separation > 0.0) {
                            return bad("separation must be > 0".into());
                        }
                        if self.n_test == 0 {
                            return bad("n_test must be >= 1".into());
                        }
                    }
                    DatasetKind::Idx => {
                        for (key, path) in [
                            ("train_images", &self.train_images),
                            ("train_labels", &self.train_labels),
                            ("test_images", &self.test_images),
                            ("test_labels", &self.test_labels),
                        ] {
                            match path {
                                None => return bad(format!("dataset idx needs {key}")),
                                Some(p) if !p.is_file() => {
                                    return bad(format!(
                                        "{key}: file {} does not exist",
                                        p.display()
                                    ))
                                }
                                Some(_) => {}
                            }
                        }
                    }
                }
                self.train_config(0)
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
                if self.experiment == ExperimentKind::Biasvar
                    && (self.splits == 0 || self.split_size == 0)
                {
                    return bad("splits and split_size must be >= 1".into());
                }
                if self.experiment == ExperimentKind::Biasvar
                    && self.splits * self.split_size > self.n_train
                {
                    return bad(format!(
                        "{} splits of {} exceed n_train {}",
                        self.splits, self.split_size, self.n_train
                    ));
                }
            }
        }
        Ok(())
    }
}
