//! Actor and critic networks over the robot team graph, plus the ablation
//! baselines.
//!
//! The graph trunk follows the message-passing rule
//! `h'_i = relu(Theta1 h_i + Theta2 sum_j (h_j || r_j - r_i) + bias)`
//! over each robot's k nearest neighbors, followed by a per-robot decoder
//! MLP. Baselines swap the trunk for plain dense layers (which ignore the
//! graph) or drop the relative-position channels.

mod batch;
mod net;
mod variant;

pub use batch::TeamBatch;
pub use net::{graph_conv, Actor, TwinCritic, ACT_DIM, CRITIC_IN, F_MAX_DEFAULT};
pub use variant::ModelVariant;
