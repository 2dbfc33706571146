use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dynamics::{random_origin, DynError, SensorNoise};
use crate::sac::{
    train_loop, EnvSnapshot, Environment, ReplayBuffer, SacError, SacTrainer, TrainEvent,
    TrainLogRow,
};
use crate::windfield::WindFieldSeries;

use super::episode::EpisodeSim;
use super::{files, streams, ExperimentConfig, HarnessError};

/// The formation-holding task wrapped as a trainable environment. Each reset
/// draws a wind series from the training set and a fresh formation origin;
/// rewards and observations come from the same stepper the evaluator uses.
pub struct TeamEnv<'w> {
    cfg: ExperimentConfig,
    winds: &'w [WindFieldSeries],
    rng: ChaCha8Rng,
    sim: Option<EpisodeSim<'w>>,
    next_episode: u64,
    episodes: Vec<(u64, u64)>,
}

impl<'w> TeamEnv<'w> {
    /// The wind set is validated up front so mid-training resets cannot fail
    /// on series length.
    pub fn new(
        cfg: &ExperimentConfig,
        winds: &'w [WindFieldSeries],
        seed: u64,
    ) -> Result<TeamEnv<'w>, HarnessError> {
        cfg.validate()?;
        if winds.is_empty() {
            return Err(HarnessError::EmptyWindSet {
                dir: cfg.train_wind_dir.clone(),
            });
        }
        for w in winds {
            if w.duration() + 1e-9 < cfg.episode_length {
                return Err(HarnessError::WindTooShort {
                    need: cfg.episode_length,
                    have: w.duration(),
                });
            }
        }
        Ok(TeamEnv {
            cfg: cfg.clone(),
            winds,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sim: None,
            next_episode: 0,
            episodes: Vec::new(),
        })
    }

    /// `(episode, wind seed)` for every episode started so far, in order.
    pub fn episode_log(&self) -> &[(u64, u64)] {
        &self.episodes
    }

    fn snapshot(sim: &mut EpisodeSim<'w>) -> Result<EnvSnapshot, DynError> {
        let obs = sim.observations()?;
        Ok(EnvSnapshot {
            obs,
            graph: sim.team.graph.clone(),
            positions: sim.team.positions(),
        })
    }
}

impl Environment for TeamEnv<'_> {
    fn n_robots(&self) -> usize {
        self.cfg.n
    }

    fn reset(&mut self) -> Result<EnvSnapshot, DynError> {
        let wind = &self.winds[self.rng.gen_range(0..self.winds.len())];
        let origin = random_origin(self.cfg.n, self.cfg.spacing, wind.spec.domain_size, &mut self.rng);
        let noise = SensorNoise {
            sigma_pos: self.cfg.sigma_pos,
            sigma_vel: self.cfg.sigma_vel,
            sigma_pressure: self.cfg.sigma_pressure,
            ..SensorNoise::seeded(self.rng.gen())
        };
        let episode = self.next_episode;
        self.next_episode += 1;
        self.episodes.push((episode, wind.seed));
        let mut sim = EpisodeSim::assemble(&self.cfg, wind, origin, noise, episode)?;
        let snap = Self::snapshot(&mut sim)?;
        self.sim = Some(sim);
        Ok(snap)
    }

    fn step(&mut self, actions: &Tensor) -> Result<(EnvSnapshot, Vec<f64>, bool), DynError> {
        let sim = self.sim.as_mut().expect("reset must run before step");
        let outcome = sim.step(actions)?;
        let snap = Self::snapshot(sim)?;
        Ok((snap, outcome.rewards, outcome.horizon_reached))
    }
}

/// Artifacts of one training run.
pub struct TrainOutcome {
    pub rows: Vec<TrainLogRow>,
    /// `(episode, wind seed)` in start order; which series each episode saw.
    pub episodes: Vec<(u64, u64)>,
    /// Final checkpoint holding the actor, online critics, and targets.
    pub checkpoint: PathBuf,
}

/// Trains `cfg.variant` against the given wind set and writes the run's
/// artifacts under `out_dir`: `config.resolved.json`, `train_log.csv`,
/// `train_episodes.csv`, any cadence checkpoints, and `checkpoint_final.tnck`.
///
/// The master seed in `cfg` pins the whole run; two calls with equal inputs
/// produce bitwise-equal weights and logs.
pub fn train_variant(
    cfg: &ExperimentConfig,
    winds: &[WindFieldSeries],
    out_dir: &Path,
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if !cfg.variant.is_learned() {
        return Err(HarnessError::BadConfig {
            reason: format!("variant {:?} has no trainable weights", cfg.variant),
        });
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.resolved.json"), cfg.to_json())?;

    let mut trainer = SacTrainer::new(
        cfg.variant,
        cfg.f_max,
        cfg.sac.clone(),
        cfg.subseed(streams::TRAINER, 0),
    )?;
    let mut buffer = ReplayBuffer::new(cfg.sac.capacity, cfg.subseed(streams::REPLAY, 0));
    let mut env = TeamEnv::new(cfg, winds, cfg.subseed(streams::ENV, 0))?;

    let final_path = out_dir.join("checkpoint_final.tnck");
    let total = cfg.sac.total_steps;
    let mut sink = |event: TrainEvent<'_>| -> Result<(), SacError> {
        if let TrainEvent::Checkpoint { step, trainer } = event {
            let path = if step == total {
                final_path.clone()
            } else {
                out_dir.join(format!("checkpoint_{step:09}.tnck"))
            };
            trainer.save(path)?;
        }
        Ok(())
    };
    let rows = train_loop(&mut trainer, &mut env, &mut buffer, &mut sink)?;

    files::write_train_log_csv(&out_dir.join("train_log.csv"), &rows)?;
    files::write_train_episodes_csv(&out_dir.join("train_episodes.csv"), env.episode_log())?;
    Ok(TrainOutcome {
        rows,
        episodes: env.episode_log().to_vec(),
        checkpoint: final_path,
    })
}
