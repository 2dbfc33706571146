use super::types::{ControlGains, DragParams, DynError, RobotState};
use crate::math::Vec2;
use serde::{Deserialize, Serialize};

/// Quadratic drag on a small sphere: `0.5 rho |w|^2 C_d A` along the unit
/// wind direction. Zero wind produces zero force (the direction is
/// undefined there).
pub fn drag_force(w: Vec2, params: &DragParams) -> Vec2 {
    let speed = w.norm();
    if speed == 0.0 {
        return Vec2::ZERO;
    }
    let magnitude = 0.5 * params.rho_air * speed * speed * params.c_d * params.a_cross;
    w * (magnitude / speed)
}

/// Feed-forward PD tracking force:
/// `Kp (r_d - r) + Kd (v_d - v) + m a_d`.
///
/// The acceleration term is scaled by mass so that, absent disturbances,
/// Newton's equation reproduces the reference acceleration exactly.
pub fn tracking_control(
    state: &RobotState,
    r_d: Vec2,
    v_d: Vec2,
    a_d: Vec2,
    gains: &ControlGains,
    mass: f64,
) -> Vec2 {
    let ep = r_d - state.r;
    let ev = v_d - state.v;
    Vec2::new(
        gains.kp[0] * ep.x + gains.kd[0] * ev.x + mass * a_d.x,
        gains.kp[1] * ep.y + gains.kd[1] * ev.y + mass * a_d.y,
    )
}

/// Shape of the desired centroid motion, applied on top of each robot's
/// formation anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferencePath {
    /// Static formation hold.
    Hold,
    /// Formation translates at a constant velocity.
    ConstantVelocity { velocity: Vec2 },
    /// Formation follows a circle of the given radius, starting at the
    /// anchor and completing a lap every `2 pi / omega` seconds.
    Circle { radius: f64, omega: f64 },
}

/// Per-robot desired position, velocity, and acceleration over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    /// Formation anchor position per robot.
    pub anchors: Vec<Vec2>,
    pub path: ReferencePath,
    /// Horizon T_f, seconds.
    pub horizon: f64,
}

impl ReferenceTrajectory {
    pub fn hold(anchors: Vec<Vec2>, horizon: f64) -> ReferenceTrajectory {
        ReferenceTrajectory {
            anchors,
            path: ReferencePath::Hold,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    fn offset(&self, t: f64) -> Vec2 {
        match self.path {
            ReferencePath::Hold => Vec2::ZERO,
            ReferencePath::ConstantVelocity { velocity } => velocity * t,
            ReferencePath::Circle { radius, omega } => {
                let a = omega * t;
                Vec2::new(radius * (a.cos() - 1.0), radius * a.sin())
            }
        }
    }

    pub fn position(&self, robot: usize, t: f64) -> Vec2 {
        self.anchors[robot] + self.offset(t)
    }

    pub fn velocity(&self, _robot: usize, t: f64) -> Vec2 {
        match self.path {
            ReferencePath::Hold => Vec2::ZERO,
            ReferencePath::ConstantVelocity { velocity } => velocity,
            ReferencePath::Circle { radius, omega } => {
                let a = omega * t;
                Vec2::new(-radius * omega * a.sin(), radius * omega * a.cos())
            }
        }
    }

    pub fn acceleration(&self, _robot: usize, t: f64) -> Vec2 {
        match self.path {
            ReferencePath::Hold | ReferencePath::ConstantVelocity { .. } => Vec2::ZERO,
            ReferencePath::Circle { radius, omega } => {
                let a = omega * t;
                Vec2::new(
                    -radius * omega * omega * a.cos(),
                    -radius * omega * omega * a.sin(),
                )
            }
        }
    }

    /// Check that the analytic velocity and acceleration agree with central
    /// finite differences of the position over the horizon (tolerance 1e-6).
    pub fn validate(&self) -> Result<(), DynError> {
        const H: f64 = 1e-4;
        const TOL: f64 = 1e-6;
        let samples = 200;
        let mut worst_v = 0.0_f64;
        let mut worst_a = 0.0_f64;
        for robot in 0..self.len().min(2) {
            for s in 0..=samples {
                let t = H + (self.horizon - 2.0 * H) * s as f64 / samples as f64;
                let rp = self.position(robot, t + H);
                let rm = self.position(robot, t - H);
                let fd_v = (rp - rm) * (1.0 / (2.0 * H));
                worst_v = worst_v.max((fd_v - self.velocity(robot, t)).norm());
                let vp = self.velocity(robot, t + H);
                let vm = self.velocity(robot, t - H);
                let fd_a = (vp - vm) * (1.0 / (2.0 * H));
                worst_a = worst_a.max((fd_a - self.acceleration(robot, t)).norm());
            }
        }
        if worst_v > TOL {
            return Err(DynError::InconsistentReference {
                quantity: "velocity",
                err: worst_v,
            });
        }
        if worst_a > TOL {
            return Err(DynError::InconsistentReference {
                quantity: "acceleration",
                err: worst_a,
            });
        }
        Ok(())
    }
}
