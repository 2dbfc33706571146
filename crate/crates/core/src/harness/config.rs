use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlGains, DragParams, RewardNorm, REWARD_BETA_DEFAULT};
use crate::policy::{ModelVariant, F_MAX_DEFAULT};
use crate::sac::SacConfig;

use super::HarnessError;

/// Everything one experiment needs: team geometry, physics, sensing, reward,
/// the trainer setup, data locations, and seeding. Serialized next to every
/// output so results carry their own provenance.
///
/// Defaults are desk-scale (9 robots, 4 neighbors, 2e5 training steps); a
/// config file can restore the full-scale setup (25 robots, 12 neighbors,
/// 5e6 steps) at the cost of much longer runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Team size.
    pub n: usize,
    /// Neighbors per robot in the communication graph.
    pub k: usize,
    /// Lattice spacing between formation anchors, meters.
    pub spacing: f64,
    pub gains: ControlGains,
    /// Robot mass, kg.
    pub mass: f64,
    pub drag: DragParams,
    /// Control interval, seconds.
    pub dt: f64,
    /// Episode length T, seconds.
    pub episode_length: f64,
    pub sigma_pos: f64,
    pub sigma_vel: f64,
    pub sigma_pressure: f64,
    /// Displacement weights in the reward.
    pub beta: [f64; 4],
    pub reward_norm: RewardNorm,
    /// Action bound entering the tanh squashing scale.
    pub f_max: f64,
    pub sac: SacConfig,
    pub train_wind_dir: PathBuf,
    pub test_wind_dir: PathBuf,
    /// Master seed; episode, placement, and noise seeds derive from it.
    pub seed: u64,
    pub variant: ModelVariant,
    /// Episodes per evaluation run.
    pub eval_episodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 9,
            k: 4,
            spacing: 1.0,
            gains: ControlGains::default(),
            mass: 1.0,
            drag: DragParams::default(),
            dt: 0.02,
            episode_length: 60.0,
            sigma_pos: 1e-3,
            sigma_vel: 1e-3,
            sigma_pressure: 0.1,
            beta: REWARD_BETA_DEFAULT,
            reward_norm: RewardNorm::L1,
            f_max: F_MAX_DEFAULT,
            sac: SacConfig {
                total_steps: 200_000,
                ..SacConfig::default()
            },
            train_wind_dir: PathBuf::from("wind/train"),
            test_wind_dir: PathBuf::from("wind/test"),
            seed: 0,
            variant: ModelVariant::Full,
            eval_episodes: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |reason: String| Err(HarnessError::BadConfig { reason });
        if self.n < 2 {
            return fail(format!("n = {} but the team needs at least 2 robots", self.n));
        }
        if self.k == 0 || self.k >= self.n {
            return fail(format!("k = {} must satisfy 1 <= k < n = {}", self.k, self.n));
        }
        if !(self.dt > 0.0) || !(self.episode_length > 0.0) {
            return fail(format!(
                "dt = {} and episode_length = {} must be positive",
                self.dt, self.episode_length
            ));
        }
        let steps = self.episode_length / self.dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return fail(format!(
                "episode_length {} is not an integer multiple of dt {}",
                self.episode_length, self.dt
            ));
        }
        if !(self.mass > 0.0) || !(self.spacing > 0.0) || !(self.f_max > 0.0) {
            return fail("mass, spacing, and f_max must be positive".into());
        }
        if self.sigma_pos < 0.0 || self.sigma_vel < 0.0 || self.sigma_pressure < 0.0 {
            return fail("noise levels must be non-negative".into());
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes = 0".into());
        }
        self.sac
            .validate()
            .map_err(|e| HarnessError::BadConfig { reason: e.to_string() })?;
        Ok(())
    }

    pub fn steps_per_episode(&self) -> u64 {
        (self.episode_length / self.dt).round() as u64
    }

    /// Deterministic per-purpose sub-seed from the master seed.
    pub fn subseed(&self, stream: u64, index: u64) -> u64 {
        // SplitMix64 over a stream/index mix keeps unrelated streams apart
        let mut z = self
            .seed
            .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::BadConfig {
                reason: format!("config parse: {e}"),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
