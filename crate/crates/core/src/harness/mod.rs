//! Experiment harness: reproducible train / evaluate / sweep pipelines that
//! tie wind series, the robot team, the policy networks, and the trainer
//! together. Every run artifact (configs, logs, metrics, manifests) is
//! written through this module so a results directory is self-describing.

mod config;
mod env;
mod episode;
mod eval;
mod files;
mod stats;

pub use config::ExperimentConfig;
pub use env::{train_variant, TeamEnv, TrainOutcome};
pub use episode::{run_episode, MetricsRow};
pub use eval::{
    ablate, eval_manifest, evaluate, replay_manifest, size_matrix, sweep_neighbors,
    write_eval_outputs, write_evaluation, Evaluation, SizeCell,
};
pub use files::{
    emit_plot_data, load_wind_dir, read_curve_csv, read_manifest, read_metrics_csv,
    read_train_episodes_csv, read_train_log_csv, write_ablation_csv, write_curve_csv,
    write_manifest, write_matrix_csv, write_metrics_csv, write_sweep_csv,
    write_train_episodes_csv, write_train_log_csv, Manifest,
};
pub use stats::{t_interval, ConfidenceSummary};

use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::{CheckpointError, TensorError};
use crate::dynamics::DynError;
use crate::sac::SacError;
use crate::windfield::{WindError, WindFileError};

/// Seed streams drawn from [`ExperimentConfig::subseed`]. Keeping the stream
/// ids in one place guarantees the trainer, environment, replay buffer, and
/// evaluator never share randomness.
pub(crate) mod streams {
    /// Network initialization and action sampling.
    pub const TRAINER: u64 = 1;
    /// Wind choice, formation placement, and sensor noise during training.
    pub const ENV: u64 = 2;
    /// Replay minibatch sampling.
    pub const REPLAY: u64 = 3;
    /// Per-episode evaluation seeds (index = episode).
    pub const EVAL: u64 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad experiment config: {reason}")]
    BadConfig { reason: String },
    #[error("wind series covers {have:.2} s but the episode needs {need:.2} s")]
    WindTooShort { need: f64, have: f64 },
    #[error("no wind series (*.twn) found in {dir}")]
    EmptyWindSet { dir: PathBuf },
    #[error("checkpoint not found: {path}")]
    MissingCheckpoint { path: PathBuf },
    #[error("malformed {what} at {path}: {reason}")]
    BadData {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error(transparent)]
    Flow(#[from] WindError),
    #[error(transparent)]
    WindFile(#[from] WindFileError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
