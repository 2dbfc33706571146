//! A reverse-mode automatic differentiation engine for small dense networks.
//!
//! The engine is deliberately minimal: f64 matrices, a dynamically recorded
//! tape of forward ops, gradient collection per named parameter store, an
//! Adam optimiser, binary checkpoints, and the tanh-squashed Gaussian
//! sampling head the policy needs. Determinism is a design constraint
//! throughout; identical inputs and seeds reproduce identical bits on the
//! same build.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod sample;
mod store;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, take_exact, CheckpointError};
pub use sample::{
    reparam_sample_tanh, squash_mean, standard_normal_like, SquashedSample, LOG_SIGMA_MAX,
    LOG_SIGMA_MIN,
};
pub use store::{ParamId, ParamStore};
pub use tape::{Neighborhoods, NodeId, ParamGrads, Tape, LOG_FLOOR};
pub use tensor::{matmul, matmul_nt, matmul_tn, Tensor, TensorError};
