use std::collections::VecDeque;

use rand::{Rng, SeedableRng};

use super::{discrete_action, ActionSpace, EnvRng, EnvSpec, Environment, LevelRange, LevelSplit, StepResult};
use crate::error::{Error, Result};

const SIZE: usize = 7;
const VIEW_RADIUS: i64 = 2;
const WALL_PROB: f64 = 0.25;
const MIN_PATH: usize = 4;
const MAX_STEPS: usize = 60;

/// Training levels: seeds `0..200`.
pub const TRAIN_LEVELS: LevelRange = LevelRange { start: 0, end: 200 };
/// Test levels start here and never overlap the training range.
pub const TEST_LEVEL_START: u64 = 1_000_000;
const TEST_LEVELS: LevelRange = LevelRange { start: TEST_LEVEL_START, end: TEST_LEVEL_START + (1 << 32) };

const MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Wall layout plus start and goal cells of one procedural level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeLayout {
    pub walls: Vec<bool>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

impl MazeLayout {
    /// Deterministically generates the level for `seed`.
    pub fn generate(seed: u64) -> Self {
        let mut rng = EnvRng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x6d61_7a65);
        loop {
            let walls: Vec<bool> = (0..SIZE * SIZE).map(|_| rng.random_bool(WALL_PROB)).collect();
            let free: Vec<usize> = (0..SIZE * SIZE).filter(|&i| !walls[i]).collect();
            if free.len() < 2 {
                continue;
            }
            let s = free[rng.random_range(0..free.len())];
            let g = free[rng.random_range(0..free.len())];
            let layout = MazeLayout { walls, start: (s % SIZE, s / SIZE), goal: (g % SIZE, g / SIZE) };
            if layout.shortest_path().is_some_and(|d| d >= MIN_PATH) {
                return layout;
            }
        }
    }

    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= SIZE as i64 || y >= SIZE as i64 {
            return true;
        }
        self.walls[y as usize * SIZE + x as usize]
    }

    /// BFS distance from start to goal, `None` when unreachable.
    pub fn shortest_path(&self) -> Option<usize> {
        let mut dist = vec![usize::MAX; SIZE * SIZE];
        let idx = |(x, y): (usize, usize)| y * SIZE + x;
        dist[idx(self.start)] = 0;
        let mut queue = VecDeque::from([self.start]);
        while let Some((x, y)) = queue.pop_front() {
            if (x, y) == self.goal {
                return Some(dist[idx((x, y))]);
            }
            for (dx, dy) in MOVES {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if !self.is_wall(nx, ny) {
                    let n = (nx as usize, ny as usize);
                    if dist[idx(n)] == usize::MAX {
                        dist[idx(n)] = dist[idx((x, y))] + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        None
    }
}

/// Procedurally generated grid mazes with a train/test level split.
///
/// The agent sees walls in a 5x5 window around itself plus the scaled offset
/// to the goal. Reaching the goal pays `1 - 0.5 * t / T` and terminates.
#[derive(Debug, Clone)]
pub struct ProcMaze {
    spec: EnvSpec,
    split: LevelSplit,
    layout: Option<MazeLayout>,
    pos: (usize, usize),
    steps: usize,
    level_log: Vec<u64>,
}

impl ProcMaze {
    pub fn new(split: LevelSplit) -> Self {
        let level_seed_set = match split {
            LevelSplit::None => None,
            LevelSplit::Train => Some(TRAIN_LEVELS),
            LevelSplit::Test => Some(TEST_LEVELS),
        };
        Self {
            spec: EnvSpec {
                observation_dim: ((2 * VIEW_RADIUS + 1).pow(2) - 1) as usize + 2,
                action_space: ActionSpace::Discrete { n: 4 },
                max_episode_steps: MAX_STEPS,
                level_seed_set,
            },
            split,
            layout: None,
            pos: (0, 0),
            steps: 0,
            level_log: Vec::new(),
        }
    }

    pub fn split(&self) -> LevelSplit {
        self.split
    }

    pub fn layout(&self) -> Option<&MazeLayout> {
        self.layout.as_ref()
    }

    /// Return of a shortest-path walk through `layout`.
    pub fn optimal_return(layout: &MazeLayout) -> f64 {
        layout.shortest_path().map_or(0.0, goal_reward)
    }

    fn observation(&self) -> Vec<f64> {
        let layout = self.layout.as_ref().expect("reset before use");
        let (x, y) = (self.pos.0 as i64, self.pos.1 as i64);
        let mut obs = Vec::with_capacity(self.spec.observation_dim);
        for dy in -VIEW_RADIUS..=VIEW_RADIUS {
            for dx in -VIEW_RADIUS..=VIEW_RADIUS {
                if dx != 0 || dy != 0 {
                    obs.push(f64::from(u8::from(layout.is_wall(x + dx, y + dy))));
                }
            }
        }
        let scale = (SIZE - 1) as f64;
        obs.push((layout.goal.0 as f64 - self.pos.0 as f64) / scale);
        obs.push((layout.goal.1 as f64 - self.pos.1 as f64) / scale);
        obs
    }

    fn draw_level(&self, rng: &mut EnvRng) -> u64 {
        match self.split {
            LevelSplit::None => rng.random::<u32>() as u64,
            LevelSplit::Train => rng.random_range(TRAIN_LEVELS.start..TRAIN_LEVELS.end),
            LevelSplit::Test => rng.random_range(TEST_LEVELS.start..TEST_LEVELS.end),
        }
    }
}

fn goal_reward(steps: usize) -> f64 {
    1.0 - 0.5 * steps as f64 / MAX_STEPS as f64
}

impl Environment for ProcMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut EnvRng, level_seed: Option<u64>) -> Result<Vec<f64>> {
        let seed = match level_seed {
            Some(seed) => {
                if let Some(set) = &self.spec.level_seed_set {
                    if !set.contains(seed) {
                        return Err(Error::Config(format!("level seed {seed} is not in the {} split", self.split)));
                    }
                }
                seed
            }
            None => self.draw_level(rng),
        };
        let layout = MazeLayout::generate(seed);
        self.pos = layout.start;
        self.layout = Some(layout);
        self.steps = 0;
        self.level_log.push(seed);
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = discrete_action(action, 4)?;
        let layout = self.layout.as_ref().ok_or_else(|| Error::Usage("step before reset".into()))?;
        let (dx, dy) = MOVES[a];
        let (nx, ny) = (self.pos.0 as i64 + dx, self.pos.1 as i64 + dy);
        if !layout.is_wall(nx, ny) {
            self.pos = (nx as usize, ny as usize);
        }
        self.steps += 1;
        let terminated = self.pos == layout.goal;
        let reward = if terminated { goal_reward(self.steps) } else { 0.0 };
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated,
            truncated: !terminated && self.steps >= self.spec.max_episode_steps,
        })
    }

    fn level_log(&self) -> &[u64] {
        &self.level_log
    }
}
