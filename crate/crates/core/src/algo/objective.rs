//! Minibatch losses of PPO, PPD and the supervised distillation baselines,
//! with exact gradients for the policy, log-std and value parameters.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::losses::{ppd_distill_term, ppo_clip_active, ppo_clip_loss};
use crate::agent::{stack_rows, Agent};
use crate::error::{check_dim, Error, Result};
use crate::math::{DistGrad, GradientTape, PolicyDistribution};
use crate::rollout::RolloutBuffer;

/// The scalar minimized by one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `-mean[L_PPO + α·H] + c_v·mean[(V - R̂)²]`
    Ppo { clip: f64, ent_coef: f64, value_coef: f64, normalize_advantage: bool },
    /// `-mean[L_PPO + α·H - λ·KL(teacher‖student)·max(ratio, 1-ε)] + c_v·mean[(V - R̂)²]`
    Ppd { clip: f64, ent_coef: f64, value_coef: f64, lambda: f64, normalize_advantage: bool },
    /// `mean[KL(teacher‖student) - α·H] + c_v·mean[(V - V_teacher)²]`
    Distill { ent_coef: f64, value_coef: f64 },
}

/// Teacher outputs over every state of a rollout buffer.
#[derive(Debug, Clone)]
pub struct TeacherTargets {
    pub dists: Vec<PolicyDistribution>,
    pub values: Vec<f64>,
}

impl TeacherTargets {
    pub fn compute(teacher: &Agent, buffer: &RolloutBuffer) -> Result<Self> {
        let obs = buffer.observation_matrix();
        Ok(Self { dists: teacher.distributions(obs)?, values: teacher.values(obs)? })
    }
}

/// One minibatch of transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Regression targets of the value network.
    pub value_targets: Vec<f64>,
    pub teacher: Option<Vec<PolicyDistribution>>,
}

impl Batch {
    /// Gathers `idx` from a buffer. Value targets are the GAE returns, or
    /// the teacher values when `teacher_value_targets` is set.
    pub fn from_buffer(
        buffer: &RolloutBuffer,
        idx: &[usize],
        teacher: Option<&TeacherTargets>,
        teacher_value_targets: bool,
    ) -> Result<Self> {
        let value_targets = if teacher_value_targets {
            let t = teacher.ok_or_else(|| Error::Usage("teacher value targets need a teacher".into()))?;
            idx.iter().map(|&i| t.values[i]).collect()
        } else {
            if buffer.returns.len() != buffer.len() {
                return Err(Error::Usage("returns have not been computed for this buffer".into()));
            }
            idx.iter().map(|&i| buffer.returns[i]).collect()
        };
        Ok(Self {
            observations: buffer.gather_observations(idx),
            actions: idx.iter().map(|&i| buffer.action(i).to_vec()).collect(),
            old_log_probs: idx.iter().map(|&i| buffer.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| buffer.advantages.get(i).copied().unwrap_or(0.0)).collect(),
            value_targets,
            teacher: teacher.map(|t| idx.iter().map(|&i| t.dists[i].clone()).collect()),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Loss components averaged over a minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// Mean clipped surrogate (maximized).
    pub ppo: f64,
    /// Mean squared value error.
    pub value: f64,
    /// Mean KL(teacher ‖ student).
    pub kl: f64,
    pub entropy: f64,
    /// The minimized scalar.
    pub total: f64,
}

impl LossStats {
    pub fn accumulate(&mut self, other: &LossStats) {
        self.ppo += other.ppo;
        self.value += other.value;
        self.kl += other.kl;
        self.entropy += other.entropy;
        self.total += other.total;
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            ppo: self.ppo * s,
            value: self.value * s,
            kl: self.kl * s,
            entropy: self.entropy * s,
            total: self.total * s,
        }
    }
}

/// Gradients of the minimized scalar with respect to every agent parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGrads {
    pub policy: GradientTape,
    pub log_std: Vec<f64>,
    pub value: GradientTape,
}

impl AgentGrads {
    pub fn zeros(agent: &Agent) -> Self {
        Self {
            policy: GradientTape::for_net(&agent.policy),
            log_std: vec![0.0; agent.log_std.len()],
            value: GradientTape::for_net(&agent.value),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.policy.as_mut_slice().iter_mut().for_each(|g| *g *= s);
        self.log_std.iter_mut().for_each(|g| *g *= s);
        self.value.as_mut_slice().iter_mut().for_each(|g| *g *= s);
    }

    /// Policy, log-std then value gradients, in that order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.policy.as_slice().iter().chain(&self.log_std).chain(self.value.as_slice()).copied()
    }
}

fn standardize(adv: &[f64]) -> Vec<f64> {
    if adv.len() < 2 {
        return adv.to_vec();
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

/// Evaluates `objective` on `batch`; with `want_grads` also backpropagates.
#[allow(clippy::needless_range_loop)]
pub fn evaluate(
    agent: &Agent,
    batch: &Batch,
    objective: &Objective,
    want_grads: bool,
) -> Result<(LossStats, Option<AgentGrads>)> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::Usage("empty minibatch".into()));
    }
    check_dim("old log-probs", m, batch.old_log_probs.len())?;
    check_dim("advantages", m, batch.advantages.len())?;
    check_dim("value targets", m, batch.value_targets.len())?;
    let needs_teacher = !matches!(objective, Objective::Ppo { .. });
    let teacher = match (&batch.teacher, needs_teacher) {
        (Some(t), _) => {
            check_dim("teacher distributions", m, t.len())?;
            Some(t)
        }
        (None, true) => return Err(Error::Usage("distillation objective without teacher outputs".into())),
        (None, false) => None,
    };

    let (ent_coef, value_coef) = match *objective {
        Objective::Ppo { ent_coef, value_coef, .. }
        | Objective::Ppd { ent_coef, value_coef, .. }
        | Objective::Distill { ent_coef, value_coef } => (ent_coef, value_coef),
    };
    let advantages = match *objective {
        Objective::Ppo { normalize_advantage: true, .. } | Objective::Ppd { normalize_advantage: true, .. } => {
            standardize(&batch.advantages)
        }
        _ => batch.advantages.clone(),
    };

    let (out, policy_cache) = agent.policy.forward_cached(batch.observations.view())?;
    let k = out.ncols();
    let inv_m = 1.0 / m as f64;
    let mut stats = LossStats::default();
    let mut policy_loss = 0.0;
    let mut upstream = Array2::<f64>::zeros((m, k));
    let mut log_std_grad = vec![0.0; agent.log_std.len()];

    for i in 0..m {
        let row = out.row(i);
        let dist = agent.head.distribution(row.as_slice().expect("row-major"), &agent.log_std);
        let action = &batch.actions[i];
        let mut grad = DistGrad::zeros(k, agent.log_std.len());
        let mut sample_loss;

        let entropy = dist.entropy();
        stats.entropy += entropy;
        sample_loss = -ent_coef * entropy;
        if want_grads && ent_coef != 0.0 {
            grad.add_scaled(&dist.grad_entropy(), -ent_coef);
        }

        match *objective {
            Objective::Ppo { clip, .. } | Objective::Ppd { clip, .. } => {
                let log_prob = dist.log_prob(action);
                let ratio = (log_prob - batch.old_log_probs[i]).exp();
                let a = advantages[i];
                let surrogate = ppo_clip_loss(ratio, a, clip);
                stats.ppo += surrogate;
                sample_loss -= surrogate;
                // coefficient of d log π in d loss
                let mut lp_coeff = if ppo_clip_active(ratio, a, clip) { -a * ratio } else { 0.0 };
                if let Objective::Ppd { lambda, .. } = *objective {
                    let target = &teacher.expect("checked")[i];
                    let kl = target.kl(&dist)?;
                    stats.kl += kl;
                    sample_loss += lambda * ppd_distill_term(kl, ratio, clip);
                    if want_grads {
                        grad.add_scaled(&dist.grad_kl_from(target)?, lambda * ratio.max(1.0 - clip));
                        if ratio > 1.0 - clip {
                            lp_coeff += lambda * kl * ratio;
                        }
                    }
                }
                if want_grads && lp_coeff != 0.0 {
                    grad.add_scaled(&dist.grad_log_prob(action), lp_coeff);
                }
            }
            Objective::Distill { .. } => {
                let target = &teacher.expect("checked")[i];
                let kl = target.kl(&dist)?;
                stats.kl += kl;
                sample_loss += kl;
                if want_grads {
                    grad.add_scaled(&dist.grad_kl_from(target)?, 1.0);
                }
            }
        }
        policy_loss += sample_loss;
        if want_grads {
            for (u, g) in upstream.row_mut(i).iter_mut().zip(&grad.out) {
                *u = g * inv_m;
            }
            for (l, g) in log_std_grad.iter_mut().zip(&grad.log_std) {
                *l += g * inv_m;
            }
        }
    }

    let (values, value_cache) = agent.value.forward_cached(batch.observations.view())?;
    let mut value_upstream = Array2::<f64>::zeros((m, 1));
    let mut sq_err = 0.0;
    for i in 0..m {
        let d = values[(i, 0)] - batch.value_targets[i];
        sq_err += d * d;
        value_upstream[(i, 0)] = 2.0 * value_coef * d * inv_m;
    }
    stats.value = sq_err * inv_m;
    stats.ppo *= inv_m;
    stats.kl *= inv_m;
    stats.entropy *= inv_m;
    stats.total = policy_loss * inv_m + value_coef * stats.value;

    if !stats.total.is_finite() {
        return Err(Error::Divergence(format!(
            "loss is {} (ppo {}, value {}, kl {}, entropy {})",
            stats.total, stats.ppo, stats.value, stats.kl, stats.entropy
        )));
    }

    let grads = if want_grads {
        let mut g = AgentGrads::zeros(agent);
        agent.policy.backward(&policy_cache, upstream.view(), &mut g.policy)?;
        agent.value.backward(&value_cache, value_upstream.view(), &mut g.value)?;
        g.log_std = log_std_grad;
        Some(g)
    } else {
        None
    };
    Ok((stats, grads))
}

/// Mean KL(teacher ‖ student) over a set of observations.
pub fn mean_kl(teacher: &Agent, student: &Agent, observations: ArrayView2<'_, f64>) -> Result<f64> {
    let t = teacher.distributions(observations)?;
    let s = student.distributions(observations)?;
    let mut total = 0.0;
    for (a, b) in t.iter().zip(&s) {
        total += a.kl(b)?;
    }
    Ok(total / t.len().max(1) as f64)
}

/// Convenience for tests and drivers: a batch from raw rows.
pub fn batch_from_rows(
    observations: &[Vec<f64>],
    actions: Vec<Vec<f64>>,
    old_log_probs: Vec<f64>,
    advantages: Vec<f64>,
    value_targets: Vec<f64>,
    teacher: Option<Vec<PolicyDistribution>>,
) -> Batch {
    Batch { observations: stack_rows(observations), actions, old_log_probs, advantages, value_targets, teacher }
}
