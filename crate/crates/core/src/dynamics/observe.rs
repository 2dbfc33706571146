use super::types::{Observation, SensorNoise};
use crate::math::Vec2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// One disturbance-free Euler step of the double integrator:
/// position advances by the old velocity, velocity absorbs the tracking
/// force. Matches `step_team` exactly when wind and learned forces vanish,
/// so the displacement below isolates the disturbances.
pub fn simulate_disturbance_free(x_prev: [f64; 4], u_tt: Vec2, dt: f64, mass: f64) -> [f64; 4] {
    [
        x_prev[0] + dt * x_prev[2],
        x_prev[1] + dt * x_prev[3],
        x_prev[2] + dt / mass * u_tt.x,
        x_prev[3] + dt / mass * u_tt.y,
    ]
}

/// Displacement between the simulated and the measured state.
pub fn displacement(x_sim: [f64; 4], x: [f64; 4]) -> [f64; 4] {
    [
        x_sim[0] - x[0],
        x_sim[1] - x[1],
        x_sim[2] - x[2],
        x_sim[3] - x[3],
    ]
}

/// Concatenate displacement, measured velocity, and measured pressure into
/// the 7-channel observation, adding per-channel Gaussian sensor noise.
pub fn build_observation(
    e: [f64; 4],
    v: Vec2,
    pressure: f64,
    noise: &mut SensorNoise,
) -> Observation {
    let mut draw = |sigma: f64| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * noise.rng.sample::<f64, _>(StandardNormal)
        }
    };
    [
        e[0] + draw(noise.sigma_pos),
        e[1] + draw(noise.sigma_pos),
        e[2] + draw(noise.sigma_vel),
        e[3] + draw(noise.sigma_vel),
        v.x + draw(noise.sigma_vel),
        v.y + draw(noise.sigma_vel),
        pressure + draw(noise.sigma_pressure),
    ]
}

/// Which norm the reward applies to the weighted displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardNorm {
    L1,
    L2,
}

impl Default for RewardNorm {
    fn default() -> Self {
        RewardNorm::L1
    }
}

/// Default displacement weights: velocity channels count ten times more
/// than position channels.
pub const REWARD_BETA_DEFAULT: [f64; 4] = [1.0, 1.0, 10.0, 10.0];

/// Negated norm of the weighted displacement; zero is the maximum.
pub fn reward(e: [f64; 4], beta: [f64; 4], norm: RewardNorm) -> f64 {
    match norm {
        RewardNorm::L1 => -e.iter().zip(beta.iter()).map(|(&e, &b)| (b * e).abs()).sum::<f64>(),
        RewardNorm::L2 => -e
            .iter()
            .zip(beta.iter())
            .map(|(&e, &b)| (b * e) * (b * e))
            .sum::<f64>()
            .sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simulated_state_hand_case() {
        let got = simulate_disturbance_free([0.0, 0.0, 1.0, 0.0], Vec2::new(1.0, 0.0), 0.1, 1.0);
        assert_eq!(got, [0.1, 0.0, 1.1, 0.0]);
    }

    #[test]
    fn zero_force_is_pure_drift_and_zero_dt_is_identity() {
        let x = [1.0, 2.0, 3.0, -4.0];
        assert_eq!(
            simulate_disturbance_free(x, Vec2::ZERO, 0.5, 2.0),
            [2.5, 0.0, 3.0, -4.0]
        );
        assert_eq!(simulate_disturbance_free(x, Vec2::new(7.0, 7.0), 0.0, 2.0), x);
    }

    #[test]
    fn displacement_hand_cases() {
        let x = [0.0, 2.0, 1.0, 4.0];
        let x_sim = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(displacement(x_sim, x), [1.0, 0.0, 2.0, 0.0]);
        assert_eq!(displacement(x, x), [0.0; 4]);
        let fwd = displacement(x_sim, x);
        let rev = displacement(x, x_sim);
        for c in 0..4 {
            assert_eq!(fwd[c], -rev[c]);
        }
    }

    #[test]
    fn noiseless_observation_is_the_exact_concatenation() {
        let mut noise = SensorNoise::disabled();
        let obs = build_observation([1.0, 1.0, 1.0, 1.0], Vec2::new(2.0, 2.0), 5.0, &mut noise);
        assert_eq!(obs, [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 5.0]);
    }

    #[test]
    fn seeded_noise_reproduces_and_varies() {
        let e = [0.0; 4];
        let mut a = SensorNoise::seeded(42);
        let mut b = SensorNoise::seeded(42);
        let oa = build_observation(e, Vec2::ZERO, 0.0, &mut a);
        let ob = build_observation(e, Vec2::ZERO, 0.0, &mut b);
        assert_eq!(oa, ob);
        let oa2 = build_observation(e, Vec2::ZERO, 0.0, &mut a);
        assert_ne!(oa, oa2);
        // pressure channel is two orders louder than the others
        let spread: Vec<f64> = (0..2000)
            .map(|_| build_observation(e, Vec2::ZERO, 0.0, &mut a)[6])
            .collect();
        let rms = (spread.iter().map(|x| x * x).sum::<f64>() / spread.len() as f64).sqrt();
        assert!((0.08..0.12).contains(&rms), "pressure noise rms {rms}");
    }

    #[test]
    fn reward_hand_cases() {
        let beta = REWARD_BETA_DEFAULT;
        assert_eq!(reward([0.0; 4], beta, RewardNorm::L1), 0.0);
        assert_eq!(reward([1.0, 1.0, 1.0, 1.0], beta, RewardNorm::L1), -22.0);
        assert_abs_diff_eq!(
            reward([1.0, 1.0, 1.0, 1.0], beta, RewardNorm::L2),
            -202.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn reward_is_nonpositive_and_monotone() {
        let beta = REWARD_BETA_DEFAULT;
        let mut e = [0.1, -0.2, 0.05, 0.0];
        let base = reward(e, beta, RewardNorm::L1);
        assert!(base < 0.0);
        e[3] = 0.3;
        assert!(reward(e, beta, RewardNorm::L1) < base);
        e[0] = -0.5;
        assert!(reward(e, beta, RewardNorm::L1) < base);
    }
}
