use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dynamics::{
    build_observation, displacement, lattice_formation, random_origin, reward,
    simulate_disturbance_free, step_team, tracking_control, ReferencePath, ReferenceTrajectory,
    SensorNoise, TeamState,
};
use crate::math::Vec2;
use crate::dynamics::DynError;
use crate::policy::{Actor, TeamBatch};
use crate::windfield::{reynolds_diagnostic, WindError, WindFieldSeries};

use super::config::ExperimentConfig;
use super::HarnessError;

/// Team-averaged measurements after one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u64,
    /// Time at the end of the step, seconds.
    pub t: f64,
    /// Mean distance to the reference position, meters.
    pub pos_err: f64,
    /// Mean speed relative to the reference velocity, m/s.
    pub vel_err: f64,
    /// Mean magnitude of the commanded force (tracking plus learned), N.
    pub control_mag: f64,
    /// Mean per-robot reward.
    pub reward: f64,
    /// Reynolds diagnostic of the wind at this time.
    pub re_diag: f64,
}

/// Per-robot outputs of one step, before team averaging.
pub(crate) struct StepOutcome {
    pub rewards: Vec<f64>,
    pub row: MetricsRow,
    pub horizon_reached: bool,
}

/// One live episode: the team, its reference, the displacement tracker, and
/// the sensing state. Both evaluation rollouts and the training environment
/// drive this same stepper.
pub(crate) struct EpisodeSim<'w> {
    wind: &'w WindFieldSeries,
    pub team: TeamState,
    reference: ReferenceTrajectory,
    cfg: SimParams,
    noise: SensorNoise,
    /// Displacement carried into the next observation, per robot.
    e: Vec<[f64; 4]>,
    episode: u64,
    tick: u64,
    horizon_ticks: u64,
}

#[derive(Clone)]
pub(crate) struct SimParams {
    pub gains: crate::dynamics::ControlGains,
    pub mass: f64,
    pub drag: crate::dynamics::DragParams,
    pub dt: f64,
    pub beta: [f64; 4],
    pub norm: crate::dynamics::RewardNorm,
}

impl SimParams {
    pub fn from_config(cfg: &ExperimentConfig) -> SimParams {
        SimParams {
            gains: cfg.gains,
            mass: cfg.mass,
            drag: cfg.drag.clone(),
            dt: cfg.dt,
            beta: cfg.beta,
            norm: cfg.reward_norm,
        }
    }
}

impl<'w> EpisodeSim<'w> {
    pub fn new(
        cfg: &ExperimentConfig,
        wind: &'w WindFieldSeries,
        origin: Vec2,
        noise: SensorNoise,
        episode: u64,
    ) -> Result<EpisodeSim<'w>, HarnessError> {
        if wind.duration() + 1e-9 < cfg.episode_length {
            return Err(HarnessError::WindTooShort {
                need: cfg.episode_length,
                have: wind.duration(),
            });
        }
        Ok(EpisodeSim::assemble(cfg, wind, origin, noise, episode)?)
    }

    /// Like `new` but assumes the wind covers the episode; the training
    /// environment checks that once for its whole wind set.
    pub(crate) fn assemble(
        cfg: &ExperimentConfig,
        wind: &'w WindFieldSeries,
        origin: Vec2,
        noise: SensorNoise,
        episode: u64,
    ) -> Result<EpisodeSim<'w>, DynError> {
        let anchors = lattice_formation(cfg.n, cfg.spacing, origin);
        let team = TeamState::at_rest(&anchors, cfg.k)?;
        let reference = ReferenceTrajectory {
            anchors,
            path: ReferencePath::Hold,
            horizon: cfg.episode_length,
        };
        Ok(EpisodeSim {
            wind,
            team,
            reference,
            cfg: SimParams::from_config(cfg),
            noise,
            e: vec![[0.0; 4]; cfg.n],
            episode,
            tick: 0,
            horizon_ticks: cfg.steps_per_episode(),
        })
    }

    /// Sensor view of the current state: displacement, velocity, and local
    /// pressure per robot, with this sim's noise levels applied.
    pub fn observations(&mut self) -> Result<Tensor, WindError> {
        let n = self.team.n();
        let t = self.team.t;
        let mut rows = Vec::with_capacity(n * 7);
        for i in 0..n {
            let robot = &self.team.robots[i];
            let sample = self.wind.sample(t, robot.r)?;
            let obs = build_observation(self.e[i], robot.v, sample.p, &mut self.noise);
            rows.extend_from_slice(&obs);
        }
        Ok(Tensor::from_vec(n, 7, rows))
    }

    pub fn batch(&self) -> TeamBatch {
        TeamBatch::single(&self.team.graph, &self.team.positions())
    }

    /// Applies the learned per-robot forces on top of the tracking law and
    /// advances one control interval.
    pub fn step(&mut self, learned: &Tensor) -> Result<StepOutcome, DynError> {
        let n = self.team.n();
        assert_eq!(learned.rows(), n);
        let t = self.team.t;
        let mut controls = Vec::with_capacity(n);
        for i in 0..n {
            let u_tt = tracking_control(
                &self.team.robots[i],
                self.reference.position(i, t),
                self.reference.velocity(i, t),
                self.reference.acceleration(i, t),
                &self.cfg.gains,
                self.cfg.mass,
            );
            controls.push(u_tt + Vec2::new(learned.get(i, 0), learned.get(i, 1)));
        }
        let prev: Vec<[f64; 4]> = self.team.robots.iter().map(|r| r.as_vec4()).collect();
        let next = step_team(&self.team, &controls, self.wind, self.cfg.dt, &self.cfg.drag)?;

        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            // the disturbance-free twin applies the same commanded force, so
            // the displacement isolates what the wind did during this step
            let ideal = simulate_disturbance_free(prev[i], controls[i], self.cfg.dt, self.cfg.mass);
            self.e[i] = displacement(ideal, next.robots[i].as_vec4());
            rewards.push(reward(self.e[i], self.cfg.beta, self.cfg.norm));
        }

        self.team = next;
        self.tick += 1;
        let t_now = self.team.t;
        let inv_n = 1.0 / n as f64;
        let mut pos_err = 0.0;
        let mut vel_err = 0.0;
        let mut control_mag = 0.0;
        for i in 0..n {
            pos_err += (self.reference.position(i, t_now) - self.team.robots[i].r).norm();
            vel_err += (self.reference.velocity(i, t_now) - self.team.robots[i].v).norm();
            control_mag += controls[i].norm();
        }
        let row = MetricsRow {
            episode: self.episode,
            t: t_now,
            pos_err: pos_err * inv_n,
            vel_err: vel_err * inv_n,
            control_mag: control_mag * inv_n,
            reward: rewards.iter().sum::<f64>() * inv_n,
            re_diag: re_diag_at(self.wind, t_now),
        };
        Ok(StepOutcome {
            rewards,
            row,
            horizon_reached: self.tick >= self.horizon_ticks,
        })
    }
}

/// Reynolds diagnostic linearly interpolated between stored frames, matching
/// how velocities are sampled in time.
pub fn re_diag_at(wind: &WindFieldSeries, t: f64) -> f64 {
    let frames = &wind.frames;
    let dt = wind.dt_frame;
    let g = (t / dt).clamp(0.0, (frames.len() - 1) as f64);
    let lo = g.floor() as usize;
    let hi = (lo + 1).min(frames.len() - 1);
    let frac = g - lo as f64;
    let a = wind_frame_re(wind, lo);
    let b = wind_frame_re(wind, hi);
    a + frac * (b - a)
}

fn wind_frame_re(wind: &WindFieldSeries, idx: usize) -> f64 {
    let f = &wind.frames[idx];
    if f.re_diag.is_finite() {
        f.re_diag
    } else {
        reynolds_diagnostic(f, &wind.spec)
    }
}

/// Rolls out one full episode and returns its per-step metrics.
///
/// In eval mode sensor noise is disabled and the actor's deterministic head
/// is used; otherwise actions are sampled and observations are noisy. The
/// formation origin is drawn from `seed`, so a (config, wind, seed) triple
/// pins the whole trajectory.
pub fn run_episode(
    cfg: &ExperimentConfig,
    actor: &Actor,
    wind: &WindFieldSeries,
    seed: u64,
    episode: u64,
    eval: bool,
) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = random_origin(cfg.n, cfg.spacing, wind.spec.domain_size, &mut rng);
    let noise = if eval {
        SensorNoise::disabled()
    } else {
        SensorNoise {
            sigma_pos: cfg.sigma_pos,
            sigma_vel: cfg.sigma_vel,
            sigma_pressure: cfg.sigma_pressure,
            ..SensorNoise::seeded(seed.wrapping_add(1))
        }
    };
    let mut sim = EpisodeSim::new(cfg, wind, origin, noise, episode)?;
    let mut action_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let steps = cfg.steps_per_episode() as usize;
    let mut rows = Vec::with_capacity(steps);
    loop {
        let obs = sim.observations()?;
        let batch = sim.batch();
        let actions = if eval {
            actor.act_deterministic(&batch, &obs)?
        } else {
            actor.act(&batch, &obs, &mut action_rng)?.0
        };
        let outcome = sim.step(&actions)?;
        rows.push(outcome.row);
        if outcome.horizon_reached {
            break;
        }
    }
    debug_assert_eq!(rows.len(), steps);
    Ok(rows)
}
