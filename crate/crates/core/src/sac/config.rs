use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid training config: {reason}")]
pub struct BadSacConfig {
    pub reason: String,
}

/// Hyperparameters of the entropy-regularized actor-critic trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Entropy temperature. Fixed unless `auto_tune_alpha` is set.
    pub alpha: f64,
    pub auto_tune_alpha: bool,
    /// Per-robot entropy target used by the automatic temperature tuner.
    pub target_entropy: f64,
    /// Target-network retention: `target = polyak * target + (1 - polyak) * online`.
    pub polyak: f64,
    /// Team transitions per gradient step.
    pub batch: usize,
    /// Environment steps driven by uniform random actions before any update.
    pub warmup_steps: u64,
    pub updates_per_step: u32,
    pub total_steps: u64,
    /// Replay capacity in team transitions.
    pub capacity: usize,
    /// Adam learning rate for actor and critics.
    pub lr: f64,
    /// Checkpoint cadence in environment steps; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Training-log cadence in environment steps.
    pub log_every: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            alpha: 0.2,
            auto_tune_alpha: false,
            target_entropy: -2.0,
            polyak: 0.995,
            batch: 64,
            warmup_steps: 1000,
            updates_per_step: 1,
            total_steps: 5_000_000,
            capacity: 200_000,
            lr: 1e-3,
            checkpoint_every: 0,
            log_every: 1000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), BadSacConfig> {
        let fail = |reason: String| Err(BadSacConfig { reason });
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma = {}", self.gamma));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return fail(format!("alpha = {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.polyak) {
            return fail(format!("polyak = {}", self.polyak));
        }
        if self.batch == 0 {
            return fail("batch = 0".into());
        }
        if self.capacity < self.batch {
            return fail(format!(
                "capacity {} below batch size {}",
                self.capacity, self.batch
            ));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return fail(format!("lr = {}", self.lr));
        }
        if self.updates_per_step == 0 {
            return fail("updates_per_step = 0".into());
        }
        if self.log_every == 0 {
            return fail("log_every = 0".into());
        }
        Ok(())
    }
}
