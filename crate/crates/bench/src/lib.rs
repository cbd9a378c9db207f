//! Fixtures shared by the benchmarks.

use ppd::algo::{PpoConfig, TeacherTargets};
use ppd::envs::{LevelSplit, VecEnv};
use ppd::rollout::{ControlPolicy, RolloutBuffer, RolloutWorker};
use ppd::seeding::rng_for;
use ppd::{Agent, EnvFamily};

/// A fresh agent with the given hidden sizes.
pub fn agent(family: EnvFamily, hidden: &[usize], seed: u64) -> Agent {
    Agent::new(family, hidden, &mut rng_for(seed, 1)).expect("valid architecture")
}

/// A full rollout buffer with advantages, at the teacher defaults for
/// `family`, plus teacher outputs over it.
pub fn rollout(family: EnvFamily, student: &Agent, teacher: &Agent) -> (RolloutBuffer, TeacherTargets, PpoConfig) {
    let cfg = PpoConfig::teacher_defaults(family);
    let split = if family.is_procedural() { LevelSplit::Train } else { LevelSplit::None };
    let venv = VecEnv::new(family, split, cfg.n_envs, 3).expect("env");
    let mut worker = RolloutWorker::new(venv, None, None, rng_for(4, 0)).expect("worker");
    let mut buf = RolloutBuffer::new(cfg.n_steps, cfg.n_envs, student.obs_dim(), student.head.action_width());
    worker.collect(&mut buf, ControlPolicy::Student, student, Some(teacher), cfg.gamma).expect("collect");
    let last = worker.bootstrap_values(student).expect("values");
    buf.compute_returns_and_advantages(&last, cfg.gamma, cfg.gae_lambda).expect("advantages");
    let targets = TeacherTargets::compute(teacher, &buf).expect("targets");
    (buf, targets, cfg)
}
