//! End-to-end workflows: dataset loading, splitting, pre-training,
//! prompt initialisation, fine-tuning with probes and channel ablation.

mod analysis;
mod config;
pub mod corpus;
mod dataset;
mod metrics;
mod prompt;
mod split;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::encoder::CheckpointError;
use crate::perturb::PoolError;
use crate::spacemetrics::MetricsError;

pub use analysis::{
    conventional_similarities, ecfp_matrix, fg_matrix, fingerprint_clusters, matched_pairs,
    probe_space, scaffold_ids, tanimoto_matrix, SpaceProbe,
};
pub use config::{SplitKind, Task, TrainConfig};
pub use dataset::{load_dataset, write_rejects, Dataset, Reject};
pub use metrics::{r2, roc_auc};
pub use prompt::{
    composite, init_prompt_weights, simplex_grid, softmax, PromptInit, PromptWeights, LOGIT_EPS,
};
pub use split::{
    few_shot, fingerprint_matrix, random_split, scaffold_groups, scaffold_split, split_dataset,
    stratified_order, stratified_split, SplitIndices,
};
pub use train::{
    ablation_masks, channel_ablation, embed_dataset, finetune, fragment_pool, initial_model,
    load_model, pretrain, save_model, write_embeddings, write_loss_csv, write_probes, AblationRow,
    EpochLosses, FinetuneOutput, PretrainOutput, ProbeRecord, PromptMode, CHECKPOINT_FILE,
    MODEL_CONFIG_FILE,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("no valid molecules in dataset")]
    EmptyDataset,
    #[error("dataset has no labels")]
    Unlabeled,
    #[error("invalid SMILES {0}")]
    Smiles(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least 3 molecules, got {0}")]
    TooFewMolecules(usize),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl PipelineError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            PipelineError::NonFinite { .. } | PipelineError::Numeric(_)
        )
    }
}
