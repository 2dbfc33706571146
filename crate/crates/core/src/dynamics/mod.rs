//! Robot team simulation: point-mass dynamics under wind drag, the
//! feed-forward tracking controller, neighbor graphs, observations, and
//! the displacement reward.

mod control;
mod observe;
mod team;
mod types;

pub use control::{drag_force, tracking_control, ReferencePath, ReferenceTrajectory};
pub use observe::{
    build_observation, displacement, reward, simulate_disturbance_free, RewardNorm,
    REWARD_BETA_DEFAULT,
};
pub use team::{knn_graph, lattice_formation, random_origin, step_team, KnnGraph, TeamState};
pub use types::{
    ControlGains, DragParams, DynError, Observation, RobotState, SensorNoise, OBS_DIM,
};
