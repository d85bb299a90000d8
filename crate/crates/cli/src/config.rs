//! Run configuration: a JSON file with three sections (`data`, `model`,
//! `train`), every field optional, defaults matching the shipped protocol.
//! Command-line flags override the file; the fully resolved struct is written
//! next to the run outputs so a run can be reproduced from its artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kinescore_core::adam::AdamHyper;
use kinescore_core::loss::LossSpec;
use kinescore_core::model::ModelConfig;
use kinescore_core::skeleton::Delimiter;
use kinescore_core::train::TrainConfig;

use crate::failure::{Failure, Result};

/// Token layout of the skeleton data files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelimiterChoice {
    /// Comma when the first data line contains one, whitespace otherwise.
    Auto,
    Comma,
    Whitespace,
}

impl From<DelimiterChoice> for Delimiter {
    fn from(choice: DelimiterChoice) -> Delimiter {
        match choice {
            DelimiterChoice::Auto => Delimiter::Auto,
            DelimiterChoice::Comma => Delimiter::Comma,
            DelimiterChoice::Whitespace => Delimiter::Whitespace,
        }
    }
}

/// Where the data lives and how to slice it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `<stem>_pos.txt` / `<stem>_ang.txt` pairs.
    pub dir: PathBuf,
    /// Label file, resolved against `dir` when relative.
    pub labels: PathBuf,
    /// Topology file; the built-in 22-joint body graph when absent.
    pub topology: Option<PathBuf>,
    /// Every sequence is resampled to this many frames.
    pub frames: usize,
    pub root_joint: usize,
    pub neck_joint: usize,
    /// Train / validation / test fractions; must sum to one.
    pub split: [f64; 3],
    pub split_seed: u64,
    pub delimiter: DelimiterChoice,
}

impl Default for DataSection {
    fn default() -> DataSection {
        DataSection {
            dir: PathBuf::from("data"),
            labels: PathBuf::from("labels.txt"),
            topology: None,
            frames: 50,
            root_joint: 0,
            neck_joint: 3,
            split: [0.7, 0.15, 0.15],
            split_seed: 7,
            delimiter: DelimiterChoice::Auto,
        }
    }
}

impl DataSection {
    /// Label path with `dir` prepended when the configured path is relative.
    pub fn labels_path(&self) -> PathBuf {
        if self.labels.is_absolute() {
            self.labels.clone()
        } else {
            self.dir.join(&self.labels)
        }
    }
}

/// Network width knobs; joint count comes from the topology, not from here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub stream_features: usize,
    pub hidden: usize,
    pub k_time: usize,
    pub k_joint: usize,
    pub res_blocks: usize,
    pub fusion_units: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> ModelSection {
        let d = ModelConfig::new(2);
        ModelSection {
            stream_features: d.stream_features,
            hidden: d.hidden,
            k_time: d.k_time,
            k_joint: d.k_joint,
            res_blocks: d.res_blocks,
            fusion_units: d.fusion_units,
            seed: d.seed,
        }
    }
}

/// Objective shape for the regression head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    Huber,
    Mse,
    LogCosh,
}

/// Optimization schedule; deliberately flat — no decay, no clipping.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossChoice,
    pub huber_delta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        let h = AdamHyper::default();
        TrainSection {
            epochs: 1500,
            batch_size: 4,
            loss: LossChoice::Huber,
            huber_delta: 1.0,
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            seed: 0,
        }
    }
}

/// The whole run configuration. Unknown keys are rejected so a typo cannot
/// silently fall back to a default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl RunConfig {
    /// Reads the JSON file, or returns all defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::input(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("config {}: {e}", path.display())))
    }

    /// `--seed` pins both the parameter draw and the batch shuffle.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.model.seed = s;
            self.train.seed = s;
        }
    }

    pub fn model_config(&self, n_joints: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            n_joints,
            stream_features: m.stream_features,
            hidden: m.hidden,
            k_time: m.k_time,
            k_joint: m.k_joint,
            res_blocks: m.res_blocks,
            fusion_units: m.fusion_units,
            seed: m.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let loss = match t.loss {
            LossChoice::Huber => LossSpec::huber(t.huber_delta),
            LossChoice::Mse => LossSpec::mse(),
            LossChoice::LogCosh => LossSpec::log_cosh(),
        };
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            loss,
            hyper: AdamHyper { lr: t.lr, beta1: t.beta1, beta2: t.beta2, eps: t.eps },
            seed: t.seed,
        }
    }

    /// Pretty JSON of the fully resolved configuration.
    pub fn to_resolved_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    /// Splits must be positive and sum to one; kernel validators catch the
    /// rest, but this check fires before any file is touched.
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.data.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Failure::input(format!(
                "split fractions must be positive, got {:?}",
                self.data.split
            )));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Failure::input(format!(
                "split fractions must sum to 1, got {:?}",
                self.data.split
            )));
        }
        Ok(())
    }
}

// ── tests ──────────────────────────────────────────────────────────────────
