//! Training loops: PPO for teachers and the three distillation methods.

use std::time::Instant;

use super::config::{DistillConfig, Method, PpoConfig};
use super::objective::{LossStats, TeacherTargets};
use super::optim::AgentOptimizer;
use super::update::{ppd_update, ppo_update, student_distill_update, teacher_distill_update};
use crate::agent::Agent;
use crate::envs::{EnvFamily, LevelSplit, RewardScaler, RunningNormalizer, VecEnv};
use crate::error::{Error, Result};
use crate::io::MetricsRow;
use crate::rollout::{ControlPolicy, RolloutBuffer, RolloutWorker};
use crate::seeding::{derive_seed, rng_for, tags};

/// Run-level settings shared by every training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub run_id: String,
    pub seed: u64,
    pub total_steps: usize,
    /// A metrics row is emitted each time this many env steps have passed.
    pub log_interval: usize,
    /// Record elapsed seconds in metrics rows (0 otherwise, which keeps
    /// metrics files bit-reproducible).
    pub log_wall_time: bool,
}

/// Default env steps between metrics rows. A common multiple of the PPD
/// (64 x 18) and SD/TD (5 x 18) rollout sizes, so every method logs at the
/// same env steps.
pub const DEFAULT_LOG_INTERVAL: usize = 5760;

impl RunOptions {
    pub fn new(run_id: impl Into<String>, seed: u64, total_steps: usize) -> Self {
        Self { run_id: run_id.into(), seed, total_steps, log_interval: DEFAULT_LOG_INTERVAL, log_wall_time: false }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The trained agent, carrying frozen normalizer statistics.
    pub agent: Agent,
    pub rows: Vec<MetricsRow>,
    pub env_steps: usize,
    /// Level seeds of every episode started during training.
    pub level_log: Vec<u64>,
}

/// Level pool used for training: the train split on procedural envs.
pub fn training_split(family: EnvFamily) -> LevelSplit {
    if family.is_procedural() {
        LevelSplit::Train
    } else {
        LevelSplit::None
    }
}

struct Logger<'a> {
    opts: &'a RunOptions,
    start: Instant,
    next_log: usize,
    losses: LossStats,
    updates: usize,
    rows: Vec<MetricsRow>,
    sink: &'a mut dyn FnMut(&MetricsRow) -> Result<()>,
}

impl<'a> Logger<'a> {
    fn new(opts: &'a RunOptions, sink: &'a mut dyn FnMut(&MetricsRow) -> Result<()>) -> Self {
        Self {
            opts,
            start: Instant::now(),
            next_log: opts.log_interval.max(1),
            losses: LossStats::default(),
            updates: 0,
            rows: Vec::new(),
            sink,
        }
    }

    fn record(&mut self, stats: &LossStats) {
        self.losses.accumulate(stats);
        self.updates += 1;
    }

    fn maybe_emit(&mut self, env_steps: usize, worker: &RolloutWorker, last: bool) -> Result<()> {
        let mean = worker.mean_recent_return();
        if worker.episodes_completed() > 0 && !mean.is_finite() {
            return Err(Error::Divergence(format!("mean episodic return is {mean} after {env_steps} steps")));
        }
        if env_steps < self.next_log && !last {
            return Ok(());
        }
        while self.next_log <= env_steps {
            self.next_log += self.opts.log_interval.max(1);
        }
        let l = self.losses.scaled(1.0 / self.updates.max(1) as f64);
        let row = MetricsRow {
            run_id: self.opts.run_id.clone(),
            env_steps: env_steps as u64,
            mean_episodic_return: mean,
            episodes_completed: worker.episodes_completed() as u64,
            loss_ppo: l.ppo,
            loss_value: l.value,
            loss_kl: l.kl,
            loss_entropy: l.entropy,
            wall_time_s: if self.opts.log_wall_time { self.start.elapsed().as_secs_f64() } else { 0.0 },
        };
        (self.sink)(&row)?;
        self.rows.push(row);
        self.losses = LossStats::default();
        self.updates = 0;
        Ok(())
    }
}

/// Trains a fresh agent with PPO. Rewards are scaled by the running return
/// statistics (and observations normalized on envs that use it); the
/// statistics are frozen into the returned agent.
pub fn ppo_train(
    family: EnvFamily,
    hidden: &[usize],
    cfg: &PpoConfig,
    opts: &RunOptions,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut agent = Agent::new(family, hidden, &mut rng_for(opts.seed, tags::INIT))?;
    let venv = VecEnv::new(family, training_split(family), cfg.n_envs, derive_seed(opts.seed, tags::ENVS))?;
    let obs_norm = family.normalizes_observations().then(|| RunningNormalizer::new(agent.obs_dim()));
    let scaler = RewardScaler::new(cfg.gamma, cfg.n_envs);
    let mut worker = RolloutWorker::new(venv, obs_norm, Some(scaler), rng_for(opts.seed, tags::ACTIONS))?;
    let mut optimizer = AgentOptimizer::new(&agent, cfg.learning_rate, cfg.max_grad_norm);
    let mut shuffle = rng_for(opts.seed, tags::SHUFFLE);
    let mut buffer = RolloutBuffer::new(cfg.n_steps, cfg.n_envs, agent.obs_dim(), agent.head.action_width());
    let mut logger = Logger::new(opts, sink);
    let mut env_steps = 0;

    while env_steps < opts.total_steps {
        buffer.clear();
        let stats = worker.collect(&mut buffer, ControlPolicy::Student, &agent, None, cfg.gamma)?;
        env_steps += stats.env_steps;
        let last_values = worker.bootstrap_values(&agent)?;
        buffer.compute_returns_and_advantages(&last_values, cfg.gamma, cfg.gae_lambda)?;
        let losses = ppo_update(&mut agent, &mut optimizer, &buffer, cfg, &mut shuffle)?;
        logger.record(&losses);
        logger.maybe_emit(env_steps, &worker, env_steps >= opts.total_steps)?;
    }

    let (obs_norm, reward_norm) = worker.frozen_normalizers();
    agent.obs_norm = obs_norm;
    agent.reward_norm = reward_norm;
    Ok(TrainOutcome { agent, rows: logger.rows, env_steps, level_log: worker.level_log() })
}

/// Distills `teacher` into a fresh student with hidden sizes `hidden`.
///
/// The student reuses the teacher's frozen normalization statistics. The
/// teacher is only read.
pub fn distill(
    teacher: &Agent,
    hidden: &[usize],
    cfg: &DistillConfig,
    opts: &RunOptions,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let family = teacher.env_family;
    let ppo = &cfg.ppo;
    let mut student = Agent::new(family, hidden, &mut rng_for(opts.seed, tags::STUDENT_INIT))?;
    student.obs_norm = teacher.obs_norm.clone().map(|mut n| {
        n.freeze();
        n
    });
    student.reward_norm = teacher.reward_norm.clone().map(|mut n| {
        n.freeze();
        n
    });
    let venv = VecEnv::new(family, training_split(family), ppo.n_envs, derive_seed(opts.seed, tags::ENVS))?;
    let scaler = student.reward_norm.clone().map(|stats| RewardScaler::from_stats(stats, ppo.gamma, ppo.n_envs));
    let mut worker = RolloutWorker::new(venv, student.obs_norm.clone(), scaler, rng_for(opts.seed, tags::ACTIONS))?;
    let mut optimizer = AgentOptimizer::new(&student, ppo.learning_rate, ppo.max_grad_norm);
    let mut shuffle = rng_for(opts.seed, tags::SHUFFLE);
    let mut buffer = RolloutBuffer::new(ppo.n_steps, ppo.n_envs, student.obs_dim(), student.head.action_width());
    let control = match cfg.method {
        Method::TeacherDistill => ControlPolicy::Teacher,
        Method::Ppd | Method::StudentDistill => ControlPolicy::Student,
    };
    let mut logger = Logger::new(opts, sink);
    let mut env_steps = 0;

    while env_steps < opts.total_steps {
        buffer.clear();
        let stats = worker.collect(&mut buffer, control, &student, Some(teacher), ppo.gamma)?;
        env_steps += stats.env_steps;
        let targets = TeacherTargets::compute(teacher, &buffer)?;
        let losses = match cfg.method {
            Method::Ppd => {
                let last_values = worker.bootstrap_values(&student)?;
                buffer.compute_returns_and_advantages(&last_values, ppo.gamma, ppo.gae_lambda)?;
                ppd_update(&mut student, &mut optimizer, &targets, &buffer, cfg, &mut shuffle)?
            }
            Method::StudentDistill => student_distill_update(&mut student, &mut optimizer, &targets, &buffer, cfg)?,
            Method::TeacherDistill => teacher_distill_update(&mut student, &mut optimizer, &targets, &buffer, cfg)?,
        };
        logger.record(&losses);
        logger.maybe_emit(env_steps, &worker, env_steps >= opts.total_steps)?;
    }

    Ok(TrainOutcome { agent: student, rows: logger.rows, env_steps, level_log: worker.level_log() })
}
