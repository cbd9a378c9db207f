use rand::Rng;

use super::{ActionSpace, EnvRng, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};

const DT: f64 = 0.1;
const ARENA: f64 = 1.0;
const MIN_START_GOAL_DIST: f64 = 0.2;
const ACTION_COST: f64 = 0.01;

/// A point in the square `[-1, 1]^2` steered by commanded velocity.
///
/// Observation: `[px, py, vx, vy, gx - px, gy - py]`. Reward is the negative
/// squared distance to the goal minus a small quadratic action cost. Episodes
/// only end by the time limit.
#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    steps: usize,
}

impl Default for PointMass {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                observation_dim: 6,
                action_space: ActionSpace::Continuous { low: vec![-1.0; 2], high: vec![1.0; 2] },
                max_episode_steps: 50,
                level_seed_set: None,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.5, 0.5],
            steps: 0,
        }
    }
}

impl PointMass {
    /// Puts the point at `pos` with zero velocity, aiming for `goal`.
    pub fn place(&mut self, pos: [f64; 2], goal: [f64; 2]) -> Result<Vec<f64>> {
        let d = dist2(pos, goal).sqrt();
        if d < MIN_START_GOAL_DIST {
            return Err(Error::Config(format!("start and goal must be at least {MIN_START_GOAL_DIST} apart, got {d}")));
        }
        self.pos = pos;
        self.goal = goal;
        self.vel = [0.0; 2];
        self.steps = 0;
        Ok(self.observation())
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.goal[0] - self.pos[0], self.goal[1] - self.pos[1]]
    }

    /// Reference return of standing still: the time limit times the mean
    /// squared distance between two uniform points of the arena (4/3).
    pub fn idle_return(&self) -> f64 {
        -(self.spec.max_episode_steps as f64) * 4.0 / 3.0
    }

    /// Scripted controller: full speed toward the goal, slowing inside one
    /// step of it. Used as a reference for teacher thresholds.
    pub fn scripted_action(obs: &[f64]) -> Vec<f64> {
        let (dx, dy) = (obs[4], obs[5]);
        let d = (dx * dx + dy * dy).sqrt();
        if d < 1e-12 {
            return vec![0.0, 0.0];
        }
        let speed = (d / DT).min(1.0);
        vec![speed * dx / d, speed * dy / d]
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut EnvRng, _level_seed: Option<u64>) -> Result<Vec<f64>> {
        loop {
            let pos = [rng.random_range(-ARENA..ARENA), rng.random_range(-ARENA..ARENA)];
            let goal = [rng.random_range(-ARENA..ARENA), rng.random_range(-ARENA..ARENA)];
            if dist2(pos, goal).sqrt() >= MIN_START_GOAL_DIST {
                return self.place(pos, goal);
            }
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != 2 || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Usage(format!("invalid point-mass action {action:?}")));
        }
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        self.vel = a;
        for i in 0..2 {
            self.pos[i] = (self.pos[i] + DT * self.vel[i]).clamp(-ARENA, ARENA);
        }
        self.steps += 1;
        let reward = -dist2(self.pos, self.goal) - ACTION_COST * (a[0] * a[0] + a[1] * a[1]);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_episode_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn seeded_reset_is_deterministic() {
        let mut a = PointMass::default();
        let mut b = PointMass::default();
        let oa = a.reset(&mut EnvRng::seed_from_u64(11), None).unwrap();
        let ob = b.reset(&mut EnvRng::seed_from_u64(11), None).unwrap();
        assert_eq!(oa, ob);
    }

    #[test]
    fn zero_action_at_rest_keeps_position_and_costs() {
        let mut env = PointMass::default();
        env.place([0.0, 0.0], [0.3, -0.4]).unwrap();
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(env.position(), [0.0, 0.0]);
        assert!((r.reward + 0.25).abs() < 1e-12);
        assert!(r.reward < 0.0);
    }

    #[test]
    fn start_on_goal_is_disallowed() {
        let mut env = PointMass::default();
        assert!(env.place([0.1, 0.1], [0.1, 0.1]).is_err());
    }

    #[test]
    fn out_of_range_actions_are_clamped() {
        let mut env = PointMass::default();
        env.place([0.0, 0.0], [0.9, 0.9]).unwrap();
        env.step(&[10.0, -10.0]).unwrap();
        assert_eq!(env.position(), [0.1, -0.1]);
    }

    #[test]
    fn episodes_end_by_truncation_only() {
        let mut env = PointMass::default();
        env.reset(&mut EnvRng::seed_from_u64(2), None).unwrap();
        for t in 1..=50 {
            let r = env.step(&[0.3, 0.1]).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, t == 50);
        }
    }
}
