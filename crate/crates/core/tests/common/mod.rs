//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use ndarray::Array2;
use ppd::algo::{batch_from_rows, evaluate, Batch, Objective};
use ppd::math::{DenseNet, HeadKind, PolicyDistribution};
use ppd::rollout::gae_advantages;
use ppd::{Agent, EnvFamily};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely: central differences
/// at `FD_STEP` carry roughly 1e-11 of round-off, so relative error below
/// this magnitude measures noise, not the derivative.
pub const GRAD_FLOOR: f64 = 1e-6;

const OBS_DIM: usize = 3;
const HIDDEN: [usize; 2] = [5, 4];
const BATCH: usize = 8;
const CLIP: f64 = 0.2;
/// Distance kept from every kink (ReLU zero, ratio clip boundaries).
const KINK_MARGIN: f64 = 1e-3;

/// The loss terms checked one at a time, plus everything combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    PpoClip,
    Value,
    Entropy,
    Kl,
    ClippedKl,
    Combined,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] =
        [LossTerm::PpoClip, LossTerm::Value, LossTerm::Entropy, LossTerm::Kl, LossTerm::ClippedKl, LossTerm::Combined];

    /// The objective isolating this term. Terms other than the surrogate
    /// are isolated by zero advantages, where `min(r·0, g(ε, 0)) = 0`.
    fn objective(self) -> Objective {
        match self {
            LossTerm::PpoClip => {
                Objective::Ppo { clip: CLIP, ent_coef: 0.0, value_coef: 0.0, normalize_advantage: false }
            }
            LossTerm::Value => {
                Objective::Ppo { clip: CLIP, ent_coef: 0.0, value_coef: 1.0, normalize_advantage: false }
            }
            LossTerm::Entropy => {
                Objective::Ppo { clip: CLIP, ent_coef: 1.0, value_coef: 0.0, normalize_advantage: false }
            }
            LossTerm::Kl => Objective::Distill { ent_coef: 0.0, value_coef: 0.0 },
            LossTerm::ClippedKl => {
                Objective::Ppd { clip: CLIP, ent_coef: 0.0, value_coef: 0.0, lambda: 1.0, normalize_advantage: false }
            }
            LossTerm::Combined => {
                Objective::Ppd { clip: CLIP, ent_coef: 0.05, value_coef: 0.5, lambda: 2.0, normalize_advantage: true }
            }
        }
    }

    fn zero_advantages(self) -> bool {
        !matches!(self, LossTerm::PpoClip | LossTerm::Combined)
    }
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_net<R: Rng>(rng: &mut R, sizes: &[usize]) -> DenseNet {
    let n = ppd::math::param_count(sizes);
    DenseNet::from_params(sizes, gaussian_vec(rng, n, 0.7)).unwrap()
}

/// Smallest |pre-activation| over every hidden unit and sample.
fn relu_margin(net: &DenseNet, obs: &Array2<f64>) -> f64 {
    let sizes = net.layer_sizes();
    let mut margin = f64::INFINITY;
    for k in 1..sizes.len() - 1 {
        let prefix = &sizes[..=k];
        let n = ppd::math::param_count(prefix);
        let sub = DenseNet::from_params(prefix, net.params()[..n].to_vec()).unwrap();
        let pre = sub.forward_batch(obs.view()).unwrap();
        margin = margin.min(pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
    }
    margin
}

/// A random small agent and minibatch, kept away from every kink of `term`.
pub fn random_instance<R: Rng>(rng: &mut R, gaussian: bool, term: LossTerm) -> (Agent, Batch) {
    loop {
        let head =
            if gaussian { HeadKind::Gaussian { action_dim: 2 } } else { HeadKind::Categorical { num_actions: 3 } };
        let mut policy_sizes = vec![OBS_DIM];
        policy_sizes.extend(HIDDEN);
        let mut value_sizes = policy_sizes.clone();
        policy_sizes.push(head.net_outputs());
        value_sizes.push(1);
        let agent = Agent {
            env_family: EnvFamily::ChainWalk,
            head,
            policy: random_net(rng, &policy_sizes),
            log_std: gaussian_vec(rng, head.log_std_len(), 0.3),
            value: random_net(rng, &value_sizes),
            obs_norm: None,
            reward_norm: None,
        };
        let obs: Vec<Vec<f64>> = (0..BATCH).map(|_| gaussian_vec(rng, OBS_DIM, 1.0)).collect();
        let dists = agent.distributions(ppd::agent::stack_rows(&obs).view()).unwrap();
        let actions: Vec<Vec<f64>> = dists.iter().map(|d| d.sample(rng)).collect();
        let mut old_log_probs = Vec::with_capacity(BATCH);
        let mut near_kink = false;
        for (d, a) in dists.iter().zip(&actions) {
            let log_ratio: f64 = rng.random_range(-0.4..0.4);
            let r = log_ratio.exp();
            near_kink |= (r - (1.0 + CLIP)).abs() < KINK_MARGIN || (r - (1.0 - CLIP)).abs() < KINK_MARGIN;
            old_log_probs.push(d.log_prob(a) - log_ratio);
        }
        let advantages = if term.zero_advantages() { vec![0.0; BATCH] } else { gaussian_vec(rng, BATCH, 1.0) };
        let teacher: Vec<PolicyDistribution> = (0..BATCH)
            .map(|_| match head {
                HeadKind::Categorical { num_actions } => {
                    PolicyDistribution::categorical(gaussian_vec(rng, num_actions, 1.0))
                }
                HeadKind::Gaussian { action_dim } => {
                    PolicyDistribution::gaussian(gaussian_vec(rng, action_dim, 1.0), gaussian_vec(rng, action_dim, 0.3))
                }
            })
            .collect();
        let value_targets = gaussian_vec(rng, BATCH, 1.0);
        let batch = batch_from_rows(&obs, actions, old_log_probs, advantages, value_targets, Some(teacher));
        if near_kink
            || relu_margin(&agent.policy, &batch.observations) < KINK_MARGIN
            || relu_margin(&agent.value, &batch.observations) < KINK_MARGIN
        {
            continue;
        }
        return (agent, batch);
    }
}

fn loss(agent: &Agent, batch: &Batch, objective: &Objective) -> f64 {
    evaluate(agent, batch, objective, false).unwrap().0.total
}

/// Which parameter block a flat index addresses.
fn param_mut(agent: &mut Agent, i: usize) -> &mut f64 {
    let np = agent.policy.num_params();
    let nl = agent.log_std.len();
    if i < np {
        &mut agent.policy.params_mut()[i]
    } else if i < np + nl {
        &mut agent.log_std[i - np]
    } else {
        &mut agent.value.params_mut()[i - np - nl]
    }
}

/// Largest per-parameter relative error between the analytic gradient and
/// central finite differences.
pub fn max_relative_error(agent: &Agent, batch: &Batch, objective: &Objective) -> f64 {
    let (_, grads) = evaluate(agent, batch, objective, true).unwrap();
    let analytic: Vec<f64> = grads.unwrap().iter().collect();
    let mut probe = agent.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *param_mut(&mut probe, i);
        *param_mut(&mut probe, i) = orig + FD_STEP;
        let up = loss(&probe, batch, objective);
        *param_mut(&mut probe, i) = orig - FD_STEP;
        let down = loss(&probe, batch, objective);
        *param_mut(&mut probe, i) = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

/// Worst relative error of `term` over `instances` random instances,
/// alternating categorical and Gaussian heads.
pub fn gradient_check(term: LossTerm, instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    (0..instances)
        .map(|k| {
            let (agent, batch) = random_instance(rng, k % 2 == 1, term);
            max_relative_error(&agent, &batch, &term.objective())
        })
        .fold(0.0, f64::max)
}

/// GAE written as the explicit double sum
/// `A_t = Σ_l (γλ)^l δ_{t+l}`, truncated at the first episode end.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 == n { last } else { values[t + 1] };
            let cont = if dones[t] { 0.0 } else { 1.0 };
            rewards[t] + gamma * cont * next - values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for (l, d) in delta.iter().enumerate().skip(t) {
                sum += (gamma * lam).powi((l - t) as i32) * d;
                if dones[l] {
                    break;
                }
            }
            sum
        })
        .collect()
}

/// Worst absolute gap between the recursive GAE and the double sum over
/// `buffers` random buffers.
pub fn gae_equivalence(buffers: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..buffers {
        let n = rng.random_range(1..64);
        let rewards = gaussian_vec(rng, n, 1.0);
        let values = gaussian_vec(rng, n, 1.0);
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let last: f64 = rng.sample(StandardNormal);
        let gamma = rng.random_range(0.0..1.0);
        let lam = rng.random_range(0.0..=1.0);
        let fast = gae_advantages(&rewards, &values, &dones, last, gamma, lam);
        let slow = gae_double_sum(&rewards, &values, &dones, last, gamma, lam);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Monte-Carlo estimate of KL(p‖q) as the mean of `log p(x) - log q(x)`,
/// x ~ p, with its standard error.
pub fn kl_monte_carlo(
    p: &PolicyDistribution,
    q: &PolicyDistribution,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = p.sample(rng);
        let d = p.log_prob(&x) - q.log_prob(&x);
        sum += d;
        sum_sq += d * d;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Closed-form KL against Monte Carlo for a fixed categorical and a fixed
/// Gaussian pair. Returns the largest gap in units of standard errors.
pub fn kl_monte_carlo_z(samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let pairs = [
        (
            PolicyDistribution::categorical(vec![0.3, -1.2, 0.8, 0.0]),
            PolicyDistribution::categorical(vec![-0.5, 0.4, 0.1, 1.1]),
        ),
        (
            PolicyDistribution::gaussian(vec![0.2, -0.7], vec![-0.3, 0.1]),
            PolicyDistribution::gaussian(vec![-0.4, 0.5], vec![0.2, -0.2]),
        ),
    ];
    pairs
        .iter()
        .map(|(p, q)| {
            let exact = p.kl(q).unwrap();
            let (mc, se) = kl_monte_carlo(p, q, samples, rng);
            (exact - mc).abs() / se
        })
        .fold(0.0, f64::max)
}

/// Exhaustive check of `g(ε, A)`, the clipped surrogate branch and the
/// lower clamp `max(ratio, 1-ε)` around their sign and clip boundaries.
/// Returns the number of table entries that disagree with the definitions.
pub fn branch_table_mismatches() -> usize {
    use ppd::algo::{clip_bound, ppd_distill_term, ppo_clip_active, ppo_clip_loss};
    let eps = 0.2;
    let tiny = 1e-9;
    let ratios = [0.0, 0.5, 0.8 - tiny, 0.8, 0.8 + tiny, 1.0, 1.2 - tiny, 1.2, 1.2 + tiny, 2.0];
    let advantages = [-2.0, -tiny, 0.0, tiny, 2.0];
    let mut bad = 0;
    for &a in &advantages {
        let g = if a >= 0.0 { 1.2 * a } else { 0.8 * a };
        bad += usize::from(clip_bound(eps, a) != g);
        for &r in &ratios {
            let clipped = if a > 0.0 {
                r > 1.2
            } else if a < 0.0 {
                r < 0.8
            } else {
                true
            };
            let expected = if clipped { g } else { r * a };
            bad += usize::from((ppo_clip_loss(r, a, eps) - expected).abs() > 1e-15);
            // the ratio gradient is live exactly when the unclipped branch is strictly smaller
            bad += usize::from(ppo_clip_active(r, a, eps) != (r * a < g));
            let clamp = if r < 0.8 { 0.8 } else { r };
            bad += usize::from(ppd_distill_term(1.5, r, eps) != 1.5 * clamp);
        }
    }
    bad
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Draws from a standard normal, for tests that need ad-hoc noise.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
