//! Action distributions produced by policy heads.
//!
//! Actions are encoded as `f64` slices: a categorical action is a single
//! element holding the action index, a Gaussian action holds one value per
//! action dimension.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a policy head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Categorical {
        num_actions: usize,
    },
    /// Diagonal Gaussian with a state-independent learned log-std vector.
    Gaussian {
        action_dim: usize,
    },
}

impl HeadKind {
    /// Width of the network output feeding this head.
    pub fn net_outputs(&self) -> usize {
        match *self {
            HeadKind::Categorical { num_actions } => num_actions,
            HeadKind::Gaussian { action_dim } => action_dim,
        }
    }

    /// Width of an encoded action.
    pub fn action_width(&self) -> usize {
        match *self {
            HeadKind::Categorical { .. } => 1,
            HeadKind::Gaussian { action_dim } => action_dim,
        }
    }

    /// Number of free log-std parameters.
    pub fn log_std_len(&self) -> usize {
        match *self {
            HeadKind::Categorical { .. } => 0,
            HeadKind::Gaussian { action_dim } => action_dim,
        }
    }

    /// Builds the distribution for one network output row.
    pub fn distribution(&self, out: &[f64], log_std: &[f64]) -> PolicyDistribution {
        match self {
            HeadKind::Categorical { .. } => PolicyDistribution::categorical(out.to_vec()),
            HeadKind::Gaussian { .. } => PolicyDistribution::gaussian(out.to_vec(), log_std.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDistribution {
    Categorical { logits: Vec<f64>, log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

/// Gradient of a scalar with respect to the distribution parameters: the
/// network output (logits or mean) and the log-std vector (Gaussian only).
#[derive(Debug, Clone, PartialEq)]
pub struct DistGrad {
    pub out: Vec<f64>,
    pub log_std: Vec<f64>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl PolicyDistribution {
    pub fn categorical(logits: Vec<f64>) -> Self {
        let log_probs = log_softmax(&logits);
        PolicyDistribution::Categorical { logits, log_probs }
    }

    pub fn gaussian(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        debug_assert_eq!(mean.len(), log_std.len());
        PolicyDistribution::Gaussian { mean, log_std }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PolicyDistribution::Categorical { .. } => "categorical",
            PolicyDistribution::Gaussian { .. } => "diagonal-gaussian",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PolicyDistribution::Categorical { logits, .. } => logits.len(),
            PolicyDistribution::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Categorical probabilities; `None` for Gaussians.
    pub fn probs(&self) -> Option<Vec<f64>> {
        match self {
            PolicyDistribution::Categorical { log_probs, .. } => Some(log_probs.iter().map(|l| l.exp()).collect()),
            PolicyDistribution::Gaussian { .. } => None,
        }
    }

    pub fn log_prob(&self, action: &[f64]) -> f64 {
        match self {
            PolicyDistribution::Categorical { log_probs, .. } => log_probs[action_index(action, log_probs.len())],
            PolicyDistribution::Gaussian { mean, log_std } => mean
                .iter()
                .zip(log_std)
                .zip(action)
                .map(|((m, ls), a)| {
                    let z = (a - m) * (-ls).exp();
                    -0.5 * z * z - ls - HALF_LN_2PI
                })
                .sum(),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            PolicyDistribution::Categorical { log_probs, .. } => {
                log_probs.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { -l.exp() * l }).sum()
            }
            PolicyDistribution::Gaussian { log_std, .. } => log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum(),
        }
    }

    /// Closed-form KL(self ‖ other).
    pub fn kl(&self, other: &PolicyDistribution) -> Result<f64> {
        match (self, other) {
            (
                PolicyDistribution::Categorical { log_probs: p, .. },
                PolicyDistribution::Categorical { log_probs: q, .. },
            ) if p.len() == q.len() => Ok(p
                .iter()
                .zip(q)
                .map(|(&lp, &lq)| if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() * (lp - lq) })
                .sum()),
            (
                PolicyDistribution::Gaussian { mean: mp, log_std: sp },
                PolicyDistribution::Gaussian { mean: mq, log_std: sq },
            ) if mp.len() == mq.len() => Ok((0..mp.len())
                .map(|i| {
                    let var_ratio = (2.0 * (sp[i] - sq[i])).exp();
                    let d = (mp[i] - mq[i]) * (-sq[i]).exp();
                    sq[i] - sp[i] + 0.5 * (var_ratio + d * d) - 0.5
                })
                .sum()),
            _ => Err(Error::Usage(format!(
                "KL between {} ({}) and {} ({})",
                self.kind_name(),
                self.dim(),
                other.kind_name(),
                other.dim()
            ))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            PolicyDistribution::Categorical { log_probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, l) in log_probs.iter().enumerate() {
                    acc += l.exp();
                    if u < acc {
                        return vec![i as f64];
                    }
                }
                vec![(log_probs.len() - 1) as f64]
            }
            PolicyDistribution::Gaussian { mean, log_std } => mean
                .iter()
                .zip(log_std)
                .map(|(m, ls)| {
                    let n: f64 = rng.sample(StandardNormal);
                    m + ls.exp() * n
                })
                .collect(),
        }
    }

    /// Deterministic action: argmax (lowest index on ties) or the mean.
    pub fn mode(&self) -> Vec<f64> {
        match self {
            PolicyDistribution::Categorical { logits, .. } => {
                let mut best = 0;
                for (i, &z) in logits.iter().enumerate() {
                    if z > logits[best] {
                        best = i;
                    }
                }
                vec![best as f64]
            }
            PolicyDistribution::Gaussian { mean, .. } => mean.clone(),
        }
    }

    /// d log π(action) / d(parameters).
    pub fn grad_log_prob(&self, action: &[f64]) -> DistGrad {
        match self {
            PolicyDistribution::Categorical { log_probs, .. } => {
                let a = action_index(action, log_probs.len());
                let out = log_probs.iter().enumerate().map(|(i, l)| f64::from(u8::from(i == a)) - l.exp()).collect();
                DistGrad { out, log_std: Vec::new() }
            }
            PolicyDistribution::Gaussian { mean, log_std } => {
                let mut out = Vec::with_capacity(mean.len());
                let mut dls = Vec::with_capacity(mean.len());
                for ((m, ls), a) in mean.iter().zip(log_std).zip(action) {
                    let inv_var = (-2.0 * ls).exp();
                    let diff = a - m;
                    out.push(diff * inv_var);
                    dls.push(diff * diff * inv_var - 1.0);
                }
                DistGrad { out, log_std: dls }
            }
        }
    }

    /// d entropy / d(parameters).
    pub fn grad_entropy(&self) -> DistGrad {
        match self {
            PolicyDistribution::Categorical { log_probs, .. } => {
                let h = self.entropy();
                let out = log_probs
                    .iter()
                    .map(|&l| {
                        let p = l.exp();
                        if p == 0.0 {
                            0.0
                        } else {
                            -p * (l + h)
                        }
                    })
                    .collect();
                DistGrad { out, log_std: Vec::new() }
            }
            PolicyDistribution::Gaussian { mean, log_std } => {
                DistGrad { out: vec![0.0; mean.len()], log_std: vec![1.0; log_std.len()] }
            }
        }
    }

    /// d KL(target ‖ self) / d(self parameters), the distillation gradient
    /// with respect to the student.
    pub fn grad_kl_from(&self, target: &PolicyDistribution) -> Result<DistGrad> {
        match (self, target) {
            (
                PolicyDistribution::Categorical { log_probs: s, .. },
                PolicyDistribution::Categorical { log_probs: t, .. },
            ) if s.len() == t.len() => {
                Ok(DistGrad { out: s.iter().zip(t).map(|(ls, lt)| ls.exp() - lt.exp()).collect(), log_std: Vec::new() })
            }
            (
                PolicyDistribution::Gaussian { mean: ms, log_std: ss },
                PolicyDistribution::Gaussian { mean: mt, log_std: st },
            ) if ms.len() == mt.len() => {
                let mut out = Vec::with_capacity(ms.len());
                let mut dls = Vec::with_capacity(ms.len());
                for i in 0..ms.len() {
                    let inv_var = (-2.0 * ss[i]).exp();
                    let d = ms[i] - mt[i];
                    out.push(d * inv_var);
                    dls.push(1.0 - ((2.0 * st[i]).exp() + d * d) * inv_var);
                }
                Ok(DistGrad { out, log_std: dls })
            }
            _ => Err(Error::Usage(format!("KL gradient between {} and {}", target.kind_name(), self.kind_name()))),
        }
    }
}

impl DistGrad {
    pub fn zeros(out: usize, log_std: usize) -> Self {
        Self { out: vec![0.0; out], log_std: vec![0.0; log_std] }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &DistGrad, s: f64) {
        self.out.iter_mut().zip(&other.out).for_each(|(a, b)| *a += s * b);
        self.log_std.iter_mut().zip(&other.log_std).for_each(|(a, b)| *a += s * b);
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.out.iter_mut().for_each(|g| *g *= s);
        self.log_std.iter_mut().for_each(|g| *g *= s);
        self
    }
}

fn action_index(action: &[f64], n: usize) -> usize {
    let a = action[0];
    debug_assert!(a >= 0.0 && (a as usize) < n && a.fract() == 0.0, "action {a} out of 0..{n}");
    a as usize
}

/// Log-density of a standard normal at `x`, used by tests and oracles.
pub fn standard_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}
