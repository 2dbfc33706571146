use crate::autodiff::Tensor;
use crate::dynamics::{DynError, KnnGraph};
use crate::math::Vec2;
use crate::policy::TeamBatch;

use super::replay::{ReplayBuffer, TeamTransition};
use super::trainer::SacTrainer;
use super::SacError;

/// What the policy sees of an environment state.
#[derive(Debug, Clone)]
pub struct EnvSnapshot {
    /// Per-robot observation rows, `n x 7`.
    pub obs: Tensor,
    pub graph: KnnGraph,
    pub positions: Vec<Vec2>,
}

/// A resettable episodic world the trainer can step through. Implementations
/// own their randomness so a fixed construction seed fixes the whole run.
pub trait Environment {
    fn n_robots(&self) -> usize;

    /// Starts a new episode and returns its initial snapshot.
    fn reset(&mut self) -> Result<EnvSnapshot, DynError>;

    /// Advances one control interval. Returns the successor snapshot, the
    /// per-robot rewards earned by the transition, and whether the episode
    /// just reached its horizon.
    fn step(&mut self, actions: &Tensor) -> Result<(EnvSnapshot, Vec<f64>, bool), DynError>;
}

/// One row of the training log, aggregated since the previous row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: u64,
    pub episode: u64,
    pub mean_reward: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Callback points of `train_loop`.
pub enum TrainEvent<'a> {
    Log(&'a TrainLogRow),
    /// Emitted at the configured cadence and always once at the end, even
    /// for a zero-step run.
    Checkpoint { step: u64, trainer: &'a SacTrainer },
}

/// Runs the interaction/update loop for `trainer.cfg.total_steps` environment
/// steps and returns the accumulated log rows.
///
/// The first `warmup_steps` actions are uniform random; afterwards actions
/// are sampled from the actor and one (or `updates_per_step`) gradient steps
/// run per environment step. Episode ends reset the environment but are
/// recorded as non-terminal transitions: the task continues past the horizon,
/// so the TD target still bootstraps there.
pub fn train_loop<E: Environment>(
    trainer: &mut SacTrainer,
    env: &mut E,
    buffer: &mut ReplayBuffer,
    sink: &mut dyn FnMut(TrainEvent<'_>) -> Result<(), SacError>,
) -> Result<Vec<TrainLogRow>, SacError> {
    let total = trainer.cfg.total_steps;
    let warmup = trainer.cfg.warmup_steps;
    let batch = trainer.cfg.batch;
    let updates_per_step = trainer.cfg.updates_per_step;
    let log_every = trainer.cfg.log_every;
    let checkpoint_every = trainer.cfg.checkpoint_every;

    let mut snapshot = env.reset()?;
    let mut episode: u64 = 0;
    let mut rows = Vec::new();
    let mut reward_sum = 0.0;
    let mut reward_n = 0u64;
    let mut critic_sum = 0.0;
    let mut actor_sum = 0.0;
    let mut loss_n = 0u64;

    for step in 1..=total {
        let team = TeamBatch::single(&snapshot.graph, &snapshot.positions);
        let actions = if step <= warmup {
            trainer.random_actions(env.n_robots())
        } else {
            trainer.actor.act(&team, &snapshot.obs, &mut trainer.rng)?.0
        };
        let (next, rewards, horizon_reached) = env.step(&actions)?;
        reward_sum += rewards.iter().sum::<f64>() / rewards.len() as f64;
        reward_n += 1;
        buffer.push(TeamTransition {
            obs: snapshot.obs,
            actions,
            rewards,
            next_obs: next.obs.clone(),
            graph: snapshot.graph,
            positions: snapshot.positions,
            next_graph: next.graph.clone(),
            next_positions: next.positions.clone(),
            done: false,
        });

        if step > warmup && buffer.len() >= batch {
            for _ in 0..updates_per_step {
                let report = trainer.train_step(buffer)?;
                critic_sum += report.critic_loss;
                actor_sum += report.actor_loss;
                loss_n += 1;
            }
        }

        snapshot = if horizon_reached {
            episode += 1;
            env.reset()?
        } else {
            next
        };

        if step % log_every == 0 {
            let row = TrainLogRow {
                step,
                episode,
                mean_reward: reward_sum / reward_n.max(1) as f64,
                critic_loss: critic_sum / loss_n.max(1) as f64,
                actor_loss: actor_sum / loss_n.max(1) as f64,
                alpha: trainer.alpha,
            };
            sink(TrainEvent::Log(&row))?;
            rows.push(row);
            reward_sum = 0.0;
            reward_n = 0;
            critic_sum = 0.0;
            actor_sum = 0.0;
            loss_n = 0;
        }
        if checkpoint_every > 0 && step % checkpoint_every == 0 {
            sink(TrainEvent::Checkpoint {
                step,
                trainer: &*trainer,
            })?;
        }
    }

    sink(TrainEvent::Checkpoint {
        step: total,
        trainer: &*trainer,
    })?;
    Ok(rows)
}
