use crate::math::Vec2;
use crate::windfield::WindError;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynError {
    #[error("neighbor count k = {k} out of range for team size n = {n}")]
    BadNeighborCount { k: usize, n: usize },
    #[error("reference {quantity} disagrees with the finite-difference slope (max error {err})")]
    InconsistentReference { quantity: &'static str, err: f64 },
    #[error(transparent)]
    Flow(#[from] WindError),
}

/// Second-order point-mass state of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub r: Vec2,
    pub v: Vec2,
}

impl RobotState {
    pub fn at_rest(r: Vec2) -> RobotState {
        RobotState { r, v: Vec2::ZERO }
    }

    /// `[r; v]` flattened, the layout used by the simulated-state update.
    pub fn as_vec4(&self) -> [f64; 4] {
        [self.r.x, self.r.y, self.v.x, self.v.y]
    }
}

/// Aerodynamic and inertial constants shared by every robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DragParams {
    /// Air density, kg/m^3.
    pub rho_air: f64,
    /// Drag coefficient of a small sphere.
    pub c_d: f64,
    /// Cross-sectional area, m^2 (sphere of radius 0.1 m).
    pub a_cross: f64,
    /// Robot mass, kg.
    pub mass: f64,
    /// Compute drag from the wind velocity relative to the robot
    /// (`w - v`) instead of the raw wind velocity.
    pub relative_drag: bool,
}

impl Default for DragParams {
    fn default() -> Self {
        DragParams {
            rho_air: 1.184,
            c_d: 0.47,
            a_cross: std::f64::consts::PI * 0.01,
            mass: 1.0,
            relative_drag: false,
        }
    }
}

/// Diagonal PD gains for the tracking controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlGains {
    /// Position gain diagonal, 1/s^2.
    pub kp: [f64; 2],
    /// Velocity gain diagonal, 1/s.
    pub kd: [f64; 2],
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains {
            kp: [5.0, 5.0],
            kd: [4.0, 4.0],
        }
    }
}

/// Per-channel sensor noise levels plus the stream that draws them.
#[derive(Debug, Clone)]
pub struct SensorNoise {
    pub sigma_pos: f64,
    pub sigma_vel: f64,
    pub sigma_pressure: f64,
    pub(crate) rng: ChaCha8Rng,
}

impl SensorNoise {
    pub fn seeded(seed: u64) -> SensorNoise {
        use rand::SeedableRng;
        SensorNoise {
            sigma_pos: 1e-3,
            sigma_vel: 1e-3,
            sigma_pressure: 0.1,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Noise-free variant used in evaluation mode.
    pub fn disabled() -> SensorNoise {
        SensorNoise {
            sigma_pos: 0.0,
            sigma_vel: 0.0,
            sigma_pressure: 0.0,
            ..SensorNoise::seeded(0)
        }
    }
}

/// Per-robot network input: displacement (position, velocity), measured
/// velocity, and measured pressure, concatenated in that order.
pub type Observation = [f64; 7];

pub const OBS_DIM: usize = 7;
