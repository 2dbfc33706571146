//! Cooperative wind-disturbance rejection for multirotor teams.
//!
//! The crate simulates planar robot formations flying through simulated
//! turbulent wind, and trains a graph-based soft actor-critic policy that
//! predicts a per-robot compensation force from local and neighbour
//! observations. It is organised as six layers:
//!
//! * [`windfield`] — pseudo-spectral incompressible flow solver that
//!   produces time-resolved wind velocity/pressure series on a periodic grid.
//! * [`dynamics`] — point-mass robot team: drag, tracking control,
//!   integration, k-nearest-neighbour graphs, observations and rewards.
//! * [`autodiff`] — a small reverse-mode tensor engine (f64, row-major)
//!   with an Adam optimiser and a squashed-Gaussian sampling head.
//! * [`policy`] — graph-convolutional actor/critic networks plus MLP
//!   baselines, built on [`autodiff`].
//! * [`sac`] — replay buffer, twin-critic soft actor-critic updates,
//!   checkpointing, and the training loop.
//! * [`harness`] — experiment configuration, episode rollouts, evaluation
//!   statistics, parameter sweeps, ablations, and plot-data export.

pub mod autodiff;
pub mod dynamics;
pub mod harness;
pub mod math;
pub mod policy;
pub mod sac;
pub mod windfield;

pub use autodiff::{AdamState, ParamStore, Tape, Tensor};
pub use dynamics::{DragParams, KnnGraph, RobotState, TeamState};
pub use harness::ExperimentConfig;
pub use math::Vec2;
pub use policy::{Actor, ModelVariant, TeamBatch, TwinCritic};
pub use sac::{ReplayBuffer, SacConfig, SacTrainer};
pub use windfield::{GridSpec, WindFieldSeries, WindFrame};
