mod common;

use ppd::algo::{Batch, TeacherTargets};
use ppd::envs::{ChainWalk, EnvRng, Environment};
use ppd::math::{DenseNet, PolicyDistribution};
use ppd::rollout::{minibatch_indices, RolloutBuffer};
use ppd::seeding::rng_for;
use ppd::{Agent, EnvFamily};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

#[test]
fn recursive_gae_matches_double_sum() {
    let worst = common::gae_equivalence(1000, &mut rng_for(21, 0));
    assert!(worst <= 1e-9, "worst gap {worst:e}");
}

proptest! {
    #[test]
    fn gae_matches_double_sum_on_arbitrary_episodes(
        steps in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, prop::bool::weighted(0.15)), 1..40),
        last in -5.0f64..5.0,
        gamma in 0.0f64..1.0,
        lam in 0.0f64..=1.0,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let fast = ppd::rollout::gae_advantages(&r, &v, &d, last, gamma, lam);
        let slow = common::gae_double_sum(&r, &v, &d, last, gamma, lam);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn buffer_returns_at_lambda_one_are_discounted_reward_sums() {
    let (n_steps, n_envs, gamma) = (7, 3, 0.9);
    let mut rng = rng_for(22, 0);
    let mut buf = RolloutBuffer::new(n_steps, n_envs, 1, 1);
    for t in 0..n_steps {
        let obs: Vec<Vec<f64>> = (0..n_envs).map(|e| vec![(t * n_envs + e) as f64]).collect();
        let rewards: Vec<f64> = (0..n_envs).map(|_| common::normal(&mut rng)).collect();
        let dones: Vec<bool> = (0..n_envs).map(|_| rng.random_bool(0.25)).collect();
        let values: Vec<f64> = (0..n_envs).map(|_| common::normal(&mut rng)).collect();
        buf.push_step(&obs, &vec![vec![0.0]; n_envs], &rewards, &rewards, &dones, &vec![-0.7; n_envs], &values)
            .unwrap();
    }
    let last = [0.4, -1.3, 2.0];
    buf.compute_returns_and_advantages(&last, gamma, 1.0).unwrap();
    for (e, &bootstrap) in last.iter().enumerate() {
        for t in 0..n_steps {
            let mut ret = 0.0;
            let mut discount = 1.0;
            let mut u = t;
            loop {
                let i = u * n_envs + e;
                ret += discount * buf.rewards[i];
                discount *= gamma;
                if buf.dones[i] {
                    break;
                }
                u += 1;
                if u == n_steps {
                    ret += discount * bootstrap;
                    break;
                }
            }
            let i = t * n_envs + e;
            assert!((buf.returns[i] - ret).abs() < 1e-12);
            assert!((buf.advantages[i] - (buf.returns[i] - buf.values[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn minibatches_gather_the_rows_they_index() {
    let (n_steps, n_envs) = (4, 5);
    let agent = Agent::new(EnvFamily::ProcMaze, &[8], &mut rng_for(23, 0)).unwrap();
    let mut buf = RolloutBuffer::new(n_steps, n_envs, agent.obs_dim(), 1);
    for t in 0..n_steps {
        let obs: Vec<Vec<f64>> = (0..n_envs).map(|e| vec![(t * 10 + e) as f64; agent.obs_dim()]).collect();
        let actions: Vec<Vec<f64>> = (0..n_envs).map(|e| vec![(e % 4) as f64]).collect();
        let idx: Vec<f64> = (0..n_envs).map(|e| (t * n_envs + e) as f64).collect();
        let lp: Vec<f64> = idx.iter().map(|i| -i - 1.0).collect();
        buf.push_step(&obs, &actions, &idx, &idx, &vec![false; n_envs], &lp, &idx).unwrap();
    }
    buf.compute_returns_and_advantages(&[0.0; 5], 0.0, 0.0).unwrap();
    let targets = TeacherTargets::compute(&agent, &buf).unwrap();
    let mbs = minibatch_indices(buf.len(), 6, &mut rng_for(24, 0));
    for mb in &mbs {
        let b = Batch::from_buffer(&buf, mb, Some(&targets), false).unwrap();
        for (row, &i) in mb.iter().enumerate() {
            assert_eq!(b.observations.row(row).to_vec(), buf.observation(i));
            assert_eq!(b.actions[row], buf.action(i));
            assert_eq!(b.old_log_probs[row], -(i as f64) - 1.0);
            // gamma 0: advantage is reward - value = 0, return is the reward
            assert_eq!(b.advantages[row], 0.0);
            assert_eq!(b.value_targets[row], i as f64);
            assert_eq!(b.teacher.as_ref().unwrap()[row], targets.dists[i]);
        }
    }
}

#[test]
fn closed_form_kl_matches_monte_carlo() {
    let z = common::kl_monte_carlo_z(1_000_000, &mut rng_for(25, 0));
    assert!(z < 3.0, "closed form is {z:.2} standard errors from Monte Carlo");
}

#[test]
fn kl_is_non_negative_and_zero_only_on_identity() {
    let mut rng = rng_for(26, 0);
    for _ in 0..500 {
        let k = rng.random_range(2..6);
        let a: Vec<f64> = (0..k).map(|_| 2.0 * common::normal(&mut rng)).collect();
        let b: Vec<f64> = (0..k).map(|_| 2.0 * common::normal(&mut rng)).collect();
        let p = PolicyDistribution::categorical(a.clone());
        let q = PolicyDistribution::categorical(b.clone());
        assert!(p.kl(&q).unwrap() >= 0.0);
        assert!(p.kl(&p).unwrap().abs() < 1e-12);
        let g = PolicyDistribution::gaussian(a.clone(), b.iter().map(|x| x * 0.3).collect());
        let h = PolicyDistribution::gaussian(b.clone(), a.iter().map(|x| x * 0.3).collect());
        assert!(g.kl(&h).unwrap() >= 0.0);
    }
}

#[test]
fn softmax_is_shift_invariant() {
    let logits = vec![0.3, -2.0, 1.7, 0.0];
    let base = PolicyDistribution::categorical(logits.clone());
    for shift in [-50.0, -1.0, 3.5, 400.0] {
        let shifted = PolicyDistribution::categorical(logits.iter().map(|l| l + shift).collect());
        for (a, b) in base.probs().unwrap().iter().zip(shifted.probs().unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(base.kl(&shifted).unwrap().abs() < 1e-12);
    }
}

#[test]
fn categorical_sampling_frequencies() {
    let d = PolicyDistribution::categorical(vec![0.5, -0.5, 1.5, 0.0]);
    let probs = d.probs().unwrap();
    let n = 100_000;
    let mut counts = [0usize; 4];
    let mut rng = rng_for(27, 0);
    for _ in 0..n {
        counts[d.sample(&mut rng)[0] as usize] += 1;
    }
    for (c, p) in counts.iter().zip(&probs) {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq} vs {p}");
    }
}

#[test]
fn gaussian_sampling_moments() {
    let (mean, log_std) = (vec![1.5, -0.5], vec![-0.7, 0.4]);
    let d = PolicyDistribution::gaussian(mean.clone(), log_std.clone());
    let n = 100_000;
    let mut rng = rng_for(28, 0);
    let samples: Vec<Vec<f64>> = (0..n).map(|_| d.sample(&mut rng)).collect();
    for j in 0..2 {
        let std = log_std[j].exp();
        let m = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
        let v = samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / n as f64;
        assert!((m - mean[j]).abs() < 3.0 * std / (n as f64).sqrt());
        // sample variance has standard error sigma^2 sqrt(2/n)
        assert!((v - std * std).abs() < 3.0 * std * std * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn clip_and_clamp_branch_tables() {
    assert_eq!(common::branch_table_mismatches(), 0);
}

#[test]
fn forward_pass_hand_oracle() {
    // W1 = [[1, -1], [0.5, 2]], b1 = [0.1, -0.2], W2 = [[3], [-1]], b2 = [0.5]
    let net = DenseNet::from_params(&[2, 2, 1], vec![1.0, -1.0, 0.5, 2.0, 0.1, -0.2, 3.0, -1.0, 0.5]).unwrap();
    // x = (1, 2): hidden (2.1, 2.8), out 6.3 - 2.8 + 0.5
    assert!((net.forward(&[1.0, 2.0]).unwrap()[0] - 4.0).abs() < 1e-12);
    // x = (-1, 0): hidden pre-activations (-0.9, 0.8), ReLU drops the first
    assert!((net.forward(&[-1.0, 0.0]).unwrap()[0] + 0.3).abs() < 1e-12);
}

#[test]
fn chain_random_policy_return_matches_exact_moments() {
    let mut env = ChainWalk::default();
    let (mean, var) = env.exact_policy_moments(|_| 0.5, 1.0);
    let mut rng = EnvRng::seed_from_u64(29);
    let episodes = 20_000;
    let mut total = 0.0;
    for _ in 0..episodes {
        env.reset(&mut rng, None).unwrap();
        loop {
            let a = f64::from(u8::from(rng.random_bool(0.5)));
            let s = env.step(&[a]).unwrap();
            total += s.reward;
            if s.terminated || s.truncated {
                break;
            }
        }
    }
    let estimate = total / episodes as f64;
    let se = (var / episodes as f64).sqrt();
    assert!((estimate - mean).abs() < 3.0 * se, "{estimate} vs exact {mean} (se {se})");
}
