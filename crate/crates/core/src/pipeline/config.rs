use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::encoder::{AdamConfig, EncoderConfig};
use crate::losses::{
    MarginMode, PretrainBatchConfig, SamplerConfig, SamplingMode, DEFAULT_ALPHA_OFFSET,
    DEFAULT_BUDGET,
};
use crate::perturb::POSITIVES_PER_ANCHOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Scaffold,
    Stratified,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Every knob of pre-training and fine-tuning; the JSON config file uses
/// these field names and any field may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub pretrain_epochs: usize,
    /// Fine-tuning epochs.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub finetune_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub alpha_offset: f64,
    pub quadruplet_budget: usize,
    pub positives_per_anchor: usize,
    pub perturb_attempts: usize,
    pub sampling: SamplingMode,
    pub margins: MarginMode,
    pub probe_epochs: Vec<usize>,
    pub split: SplitKind,
    pub split_ratios: [f64; 3],
    pub few_shot_fraction: f64,
    pub stratify_k: usize,
    pub grid_step: f64,
    pub encoder: EncoderConfig,
    /// Molecules per forward pass when only embeddings are needed.
    pub embed_chunk: usize,
    /// Tab-separated fragment file; the built-in pool when absent.
    pub fragment_pool: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            pretrain_epochs: 50,
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            finetune_learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            alpha_offset: DEFAULT_ALPHA_OFFSET,
            quadruplet_budget: DEFAULT_BUDGET,
            positives_per_anchor: POSITIVES_PER_ANCHOR,
            perturb_attempts: 3,
            sampling: SamplingMode::GapWeighted,
            margins: MarginMode::Adaptive,
            probe_epochs: vec![0, 10, 20, 50, 100],
            split: SplitKind::Scaffold,
            split_ratios: [0.8, 0.1, 0.1],
            few_shot_fraction: 1.0,
            stratify_k: 10,
            grid_step: 0.05,
            encoder: EncoderConfig::default(),
            embed_chunk: 64,
            fragment_pool: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
            || self.split_ratios.iter().any(|r| *r < 0.0)
        {
            return bad(format!(
                "split ratios {:?} must be non-negative and sum to 1",
                self.split_ratios
            ));
        }
        if let Some(e) = self.probe_epochs.iter().find(|&&e| e > self.epochs) {
            return bad(format!("probe epoch {e} exceeds epochs {}", self.epochs));
        }
        if !(self.few_shot_fraction > 0.0 && self.few_shot_fraction <= 1.0) {
            return bad(format!(
                "few-shot fraction {} outside (0, 1]",
                self.few_shot_fraction
            ));
        }
        if self.batch_size < 3 {
            return bad("batch size must be at least 3".into());
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0)
            || ((1.0 / self.grid_step).round() * self.grid_step - 1.0).abs() > 1e-9
        {
            return bad(format!("grid step {} must divide 1", self.grid_step));
        }
        if self.encoder.dim == 0
            || self.encoder.layers == 0
            || self.encoder.heads == 0
            || !self.encoder.dim.is_multiple_of(self.encoder.heads)
        {
            return bad("encoder needs dim, layers, heads ≥ 1 with heads dividing dim".into());
        }
        if !(self.learning_rate > 0.0 && self.finetune_learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn batch_config(&self) -> PretrainBatchConfig {
        PretrainBatchConfig {
            positives: self.positives_per_anchor,
            perturb_attempts: self.perturb_attempts,
            sampler: SamplerConfig {
                budget: self.quadruplet_budget,
                alpha_offset: self.alpha_offset,
                mode: self.sampling,
                margins: self.margins,
            },
        }
    }
}
