//! One iteration's parameter updates for each training method.

use rand::Rng;

use super::config::{DistillConfig, PpoConfig};
use super::objective::{evaluate, Batch, LossStats, Objective, TeacherTargets};
use super::optim::AgentOptimizer;
use crate::agent::Agent;
use crate::error::{Error, Result};
use crate::rollout::{minibatch_indices, RolloutBuffer};

/// Epochs of shuffled minibatch steps on `objective`. Returns the loss
/// components averaged over all minibatches.
#[allow(clippy::too_many_arguments)]
fn epoch_updates<R: Rng + ?Sized>(
    agent: &mut Agent,
    optimizer: &mut AgentOptimizer,
    buffer: &RolloutBuffer,
    teacher: Option<&TeacherTargets>,
    objective: &Objective,
    n_epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<LossStats> {
    if !buffer.is_full() || buffer.advantages.len() != buffer.len() {
        return Err(Error::Usage("update needs a full, post-processed rollout buffer".into()));
    }
    let mut total = LossStats::default();
    let mut count = 0usize;
    for _ in 0..n_epochs {
        for idx in minibatch_indices(buffer.len(), batch_size, rng) {
            let batch = Batch::from_buffer(buffer, &idx, teacher, false)?;
            let (stats, grads) = evaluate(agent, &batch, objective, true)?;
            optimizer.step(agent, grads.expect("requested"))?;
            total.accumulate(&stats);
            count += 1;
        }
    }
    Ok(total.scaled(1.0 / count as f64))
}

/// Clipped-surrogate PPO update used for teacher training.
pub fn ppo_update<R: Rng + ?Sized>(
    agent: &mut Agent,
    optimizer: &mut AgentOptimizer,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats> {
    let objective = Objective::Ppo {
        clip: cfg.clip_range,
        ent_coef: cfg.ent_coef,
        value_coef: cfg.value_coef,
        normalize_advantage: cfg.normalize_advantage,
    };
    epoch_updates(agent, optimizer, buffer, None, &objective, cfg.n_epochs, cfg.batch_size, rng)
}

/// Proximal policy distillation update: epochs of minibatch steps on the
/// clipped surrogate plus the ratio-clamped KL to the teacher, with the
/// critic regressed on the student's own returns.
pub fn ppd_update<R: Rng + ?Sized>(
    student: &mut Agent,
    optimizer: &mut AgentOptimizer,
    teacher: &TeacherTargets,
    buffer: &RolloutBuffer,
    cfg: &DistillConfig,
    rng: &mut R,
) -> Result<LossStats> {
    let objective = Objective::Ppd {
        clip: cfg.ppo.clip_range,
        ent_coef: cfg.ppo.ent_coef,
        value_coef: cfg.ppo.value_coef,
        lambda: cfg.lambda,
        normalize_advantage: cfg.ppo.normalize_advantage,
    };
    epoch_updates(student, optimizer, buffer, Some(teacher), &objective, cfg.ppo.n_epochs, cfg.ppo.batch_size, rng)
}

/// Supervised distillation step shared by student- and teacher-distill: one
/// full-batch step on `KL(teacher‖student) - α·H`, with the critic regressed
/// on the teacher's values. The two methods differ only in who collected
/// the buffer.
pub fn student_distill_update(
    student: &mut Agent,
    optimizer: &mut AgentOptimizer,
    teacher: &TeacherTargets,
    buffer: &RolloutBuffer,
    cfg: &DistillConfig,
) -> Result<LossStats> {
    if !buffer.is_full() {
        return Err(Error::Usage("update needs a full rollout buffer".into()));
    }
    let objective = Objective::Distill { ent_coef: cfg.ppo.ent_coef, value_coef: cfg.ppo.value_coef };
    let idx: Vec<usize> = (0..buffer.len()).collect();
    let batch = Batch::from_buffer(buffer, &idx, Some(teacher), true)?;
    let (stats, grads) = evaluate(student, &batch, &objective, true)?;
    optimizer.step(student, grads.expect("requested"))?;
    Ok(stats)
}

/// Teacher-distill update; identical losses to [`student_distill_update`]
/// on a teacher-collected buffer.
pub fn teacher_distill_update(
    student: &mut Agent,
    optimizer: &mut AgentOptimizer,
    teacher: &TeacherTargets,
    buffer: &RolloutBuffer,
    cfg: &DistillConfig,
) -> Result<LossStats> {
    student_distill_update(student, optimizer, teacher, buffer, cfg)
}
