use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    load_checkpoint, reparam_sample_tanh, save_checkpoint, standard_normal_like, take_exact,
    AdamConfig, AdamState, CheckpointError, NodeId, ParamStore, Tape, Tensor, TensorError,
};
use crate::dynamics::OBS_DIM;
use crate::policy::{Actor, ModelVariant, TeamBatch, TwinCritic, ACT_DIM};

use super::config::SacConfig;
use super::replay::{ReplayBuffer, TeamTransition};
use super::SacError;

/// One-step temporal-difference target for a single robot:
/// `r + gamma * (min_q_next - alpha * logp_next)`, truncated at terminals.
pub fn bellman_backup(
    reward: f64,
    gamma: f64,
    done: bool,
    min_q_next: f64,
    alpha: f64,
    logp_next: f64,
) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (min_q_next - alpha * logp_next)
    }
}

/// Squared TD-error averaged over rows, summed over both critics.
pub fn critic_objective(
    tape: &mut Tape,
    q1: NodeId,
    q2: NodeId,
    target: NodeId,
) -> Result<NodeId, TensorError> {
    let d1 = tape.sub(q1, target)?;
    let d2 = tape.sub(q2, target)?;
    let s1 = tape.square(d1);
    let s2 = tape.square(d2);
    let m1 = tape.mean_all(s1);
    let m2 = tape.mean_all(s2);
    tape.add(m1, m2)
}

/// Mean of `alpha * log_pi - min(Q1, Q2)` over all rows.
pub fn actor_objective(
    tape: &mut Tape,
    log_pi: NodeId,
    q1: NodeId,
    q2: NodeId,
    alpha: f64,
) -> Result<NodeId, TensorError> {
    let q_min = tape.minimum(q1, q2)?;
    let weighted = tape.scale(log_pi, alpha);
    let gap = tape.sub(weighted, q_min)?;
    Ok(tape.mean_all(gap))
}

/// A minibatch of team transitions flattened into contiguous row blocks,
/// one row per robot, with the matching stacked neighborhood structure.
pub(crate) struct StackedBatch {
    pub obs: Tensor,
    pub actions: Tensor,
    pub next_obs: Tensor,
    pub rewards: Vec<f64>,
    /// 1.0 where the source transition was terminal, else 0.0, per row.
    pub done: Vec<f64>,
    pub now: TeamBatch,
    pub next: TeamBatch,
}

pub(crate) fn stack(picks: &[&TeamTransition]) -> StackedBatch {
    let rows: usize = picks.iter().map(|t| t.n_robots()).sum();
    let mut obs = Vec::with_capacity(rows * OBS_DIM);
    let mut actions = Vec::with_capacity(rows * ACT_DIM);
    let mut next_obs = Vec::with_capacity(rows * OBS_DIM);
    let mut rewards = Vec::with_capacity(rows);
    let mut done = Vec::with_capacity(rows);
    for t in picks {
        obs.extend_from_slice(t.obs.data());
        actions.extend_from_slice(t.actions.data());
        next_obs.extend_from_slice(t.next_obs.data());
        rewards.extend_from_slice(&t.rewards);
        let flag = if t.done { 1.0 } else { 0.0 };
        done.extend(std::iter::repeat(flag).take(t.n_robots()));
    }
    StackedBatch {
        obs: Tensor::from_vec(rows, OBS_DIM, obs),
        actions: Tensor::from_vec(rows, ACT_DIM, actions),
        next_obs: Tensor::from_vec(rows, OBS_DIM, next_obs),
        rewards,
        done,
        now: TeamBatch::stacked(picks.iter().map(|t| (&t.graph, t.positions.as_slice()))),
        next: TeamBatch::stacked(picks.iter().map(|t| (&t.next_graph, t.next_positions.as_slice()))),
    }
}

/// Losses observed during one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Soft actor-critic state: one stochastic actor, twin online critics, their
/// Polyak-averaged targets, and per-network Adam moments.
#[derive(Debug, Clone)]
pub struct SacTrainer {
    pub cfg: SacConfig,
    pub actor: Actor,
    pub critic: TwinCritic,
    pub target: TwinCritic,
    pub alpha: f64,
    log_alpha: f64,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub(crate) rng: ChaCha8Rng,
    updates: u64,
}

impl SacTrainer {
    /// Builds fresh networks for `variant`. The seed fixes the actor and
    /// critic initializations and the trainer's own sampling stream; equal
    /// seeds give bitwise-equal training runs on the same inputs.
    pub fn new(
        variant: ModelVariant,
        f_max: f64,
        cfg: SacConfig,
        seed: u64,
    ) -> Result<SacTrainer, SacError> {
        cfg.validate()?;
        let actor = Actor::new(variant, f_max, seed);
        let critic = TwinCritic::new(variant, seed.wrapping_add(1));
        let target = critic.clone();
        let adam = AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        };
        let actor_opt = AdamState::new(&actor.store, adam.clone());
        let critic_opt = AdamState::new(&critic.store, adam);
        let alpha = cfg.alpha;
        Ok(SacTrainer {
            cfg,
            actor,
            critic,
            target,
            alpha,
            log_alpha: alpha.max(1e-8).ln(),
            actor_opt,
            critic_opt,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(2)),
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// TD targets for a stacked batch of successor states. Actions are drawn
    /// fresh from the current policy; values come from the target critics.
    /// The result is a plain tensor, so no gradient ever flows through it.
    pub fn q_target(
        &mut self,
        next: &TeamBatch,
        next_obs: &Tensor,
        rewards: &[f64],
        done: &[f64],
    ) -> Result<Tensor, SacError> {
        let rows = next_obs.rows();
        assert_eq!(rewards.len(), rows);
        assert_eq!(done.len(), rows);
        let (next_actions, logp) = self.actor.act(next, next_obs, &mut self.rng)?;
        let (q1, q2) = self.target.values(next, next_obs, &next_actions)?;
        let mut y = Tensor::zeros(rows, 1);
        for i in 0..rows {
            let min_q = q1.get(i, 0).min(q2.get(i, 0));
            y.set(
                i,
                0,
                bellman_backup(
                    rewards[i],
                    self.cfg.gamma,
                    done[i] > 0.5,
                    min_q,
                    self.alpha,
                    logp.get(i, 0),
                ),
            );
        }
        Ok(y)
    }

    /// One gradient step on a sampled minibatch: critic update, then actor
    /// update against the refreshed critics, then a Polyak target update.
    pub fn train_step(&mut self, buffer: &mut ReplayBuffer) -> Result<StepReport, SacError> {
        let sb = stack(&buffer.sample(self.cfg.batch)?);
        self.train_step_stacked(&sb)
    }

    pub(crate) fn train_step_stacked(&mut self, sb: &StackedBatch) -> Result<StepReport, SacError> {
        let rows = sb.obs.rows();
        let y = self.q_target(&sb.next, &sb.next_obs, &sb.rewards, &sb.done)?;

        // critics
        let mut tape = Tape::new();
        let leaves = tape.bind(&self.critic.store)?;
        let obs = tape.constant(sb.obs.clone());
        let actions = tape.constant(sb.actions.clone());
        let (q1, q2) = self.critic.forward_pair(&mut tape, &leaves, obs, actions, &sb.now)?;
        let y_node = tape.constant(y);
        let loss = critic_objective(&mut tape, q1, q2, y_node)?;
        let critic_loss = tape.value(loss).item()?;
        if !critic_loss.is_finite() {
            return Err(SacError::NonFinite {
                quantity: "critic loss",
                update: self.updates,
            });
        }
        let grads = tape.backward(loss)?;
        self.critic_opt.update(&mut self.critic.store, &grads)?;

        // actor, against the critics as just updated
        let mut tape = Tape::new();
        let actor_leaves = tape.bind(&self.actor.store)?;
        let critic_leaves = tape.freeze(&self.critic.store);
        let obs = tape.constant(sb.obs.clone());
        let (mu, log_sigma) = self.actor.forward(&mut tape, &actor_leaves, obs, &sb.now)?;
        let xi = standard_normal_like(rows, ACT_DIM, &mut self.rng);
        let sample = reparam_sample_tanh(&mut tape, mu, log_sigma, self.actor.scale(), xi)?;
        let (q1, q2) =
            self.critic
                .forward_pair(&mut tape, &critic_leaves, obs, sample.action, &sb.now)?;
        let loss = actor_objective(&mut tape, sample.log_density, q1, q2, self.alpha)?;
        let actor_loss = tape.value(loss).item()?;
        if !actor_loss.is_finite() {
            return Err(SacError::NonFinite {
                quantity: "actor loss",
                update: self.updates,
            });
        }
        let logp_mean = {
            let t = tape.value(sample.log_density);
            t.data().iter().sum::<f64>() / t.len() as f64
        };
        let grads = tape.backward(loss)?;
        self.actor_opt.update(&mut self.actor.store, &grads)?;

        if self.cfg.auto_tune_alpha {
            // gradient step on log(alpha) for J = -alpha * (logp + H_target)
            let err = logp_mean + self.cfg.target_entropy;
            self.log_alpha += self.cfg.lr * self.alpha * err;
            self.alpha = self.log_alpha.exp();
        }

        self.target
            .store
            .polyak_from(&self.critic.store, self.cfg.polyak)?;
        self.updates += 1;
        Ok(StepReport {
            critic_loss,
            actor_loss,
            alpha: self.alpha,
        })
    }

    /// Uniform random team actions in the squashed action box, used before
    /// the policy has seen any data.
    pub fn random_actions(&mut self, n: usize) -> Tensor {
        use rand::Rng;
        let s = self.actor.scale();
        let data = (0..n * ACT_DIM)
            .map(|_| self.rng.gen_range(-s..s))
            .collect();
        Tensor::from_vec(n, ACT_DIM, data)
    }

    /// Writes every network to one checkpoint file under the prefixes
    /// `actor.`, `critic1.`, `critic2.`, `critic1_target.`, `critic2_target.`.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), CheckpointError> {
        let mut entries: Vec<(String, &Tensor)> = Vec::new();
        for (name, t) in self.actor.store.iter() {
            entries.push((format!("actor.{name}"), t));
        }
        for (name, t) in self.critic.store.iter() {
            entries.push((rename_q(name, false), t));
        }
        for (name, t) in self.target.store.iter() {
            entries.push((rename_q(name, true), t));
        }
        save_checkpoint(path, &entries)
    }

    /// Restores all network weights from `save` output. Architecture (variant
    /// and layer shapes) must match the current trainer.
    pub fn load<P: AsRef<Path>>(&mut self, path: P) -> Result<(), SacError> {
        let loaded = load_checkpoint(path)?;
        let mut expected = Vec::new();
        let mut describe = |store: &ParamStore, map: &dyn Fn(&str) -> String| {
            for slot in 0..store.len() {
                let t = store.tensor_at(slot);
                expected.push((map(store.name_at(slot)), t.shape()));
            }
        };
        describe(&self.actor.store, &|n| format!("actor.{n}"));
        describe(&self.critic.store, &|n| rename_q(n, false));
        describe(&self.target.store, &|n| rename_q(n, true));
        let mut by_name = take_exact(loaded, &expected)?;
        let mut restore = |store: &mut ParamStore, map: &dyn Fn(&str) -> String| {
            for slot in 0..store.len() {
                let key = map(store.name_at(slot));
                let t = by_name.remove(&key).expect("take_exact checked the name set");
                *store.tensor_at_mut(slot) = t;
            }
        };
        restore(&mut self.actor.store, &|n| format!("actor.{n}"));
        restore(&mut self.critic.store, &|n| rename_q(n, false));
        restore(&mut self.target.store, &|n| rename_q(n, true));
        Ok(())
    }

}

/// Restores only the actor weights from a full trainer checkpoint, for
/// evaluating a policy without rebuilding critics or optimizer state.
pub fn load_actor_weights<P: AsRef<Path>>(actor: &mut Actor, path: P) -> Result<(), SacError> {
    let loaded = load_checkpoint(path)?;
    let mut by_name: std::collections::BTreeMap<String, Tensor> = loaded.into_iter().collect();
    for slot in 0..actor.store.len() {
        let key = format!("actor.{}", actor.store.name_at(slot));
        let t = by_name
            .remove(&key)
            .ok_or(CheckpointError::MissingTensors { names: vec![key] })?;
        let want = actor.store.tensor_at(slot).shape();
        if t.shape() != want {
            return Err(CheckpointError::ShapeMismatch {
                name: actor.store.name_at(slot).to_string(),
                expected: want,
                found: t.shape(),
            }
            .into());
        }
        *actor.store.tensor_at_mut(slot) = t;
    }
    Ok(())
}

fn rename_q(name: &str, target: bool) -> String {
    let (head, rest) = if let Some(rest) = name.strip_prefix("q1.") {
        ("critic1", rest)
    } else if let Some(rest) = name.strip_prefix("q2.") {
        ("critic2", rest)
    } else {
        panic!("critic parameter {name:?} lacks a q1./q2. prefix");
    };
    if target {
        format!("{head}_target.{rest}")
    } else {
        format!("{head}.{rest}")
    }
}
