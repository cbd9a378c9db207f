//! Toy environments, running normalizers and the vectorized wrapper.

mod chain;
mod maze;
mod normalize;
mod point_mass;
mod vec_env;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::ChainWalk;
pub use maze::{MazeLayout, ProcMaze, TEST_LEVEL_START, TRAIN_LEVELS};
pub use normalize::{RewardScaler, RunningNormalizer};
pub use point_mass::PointMass;
pub use vec_env::{EpisodeInfo, VecEnv, VecStep};

pub type EnvRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn width(&self) -> usize {
        match self {
            ActionSpace::Discrete { .. } => 1,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }
}

/// Half-open range of level seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRange {
    pub start: u64,
    pub end: u64,
}

impl LevelRange {
    pub fn contains(&self, seed: u64) -> bool {
        (self.start..self.end).contains(&seed)
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn is_disjoint(&self, other: &LevelRange) -> bool {
        self.end <= other.start || other.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
    pub level_seed_set: Option<LevelRange>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.action_space {
            ActionSpace::Discrete { n } if *n < 2 => {
                Err(Error::Config(format!("discrete action space needs n >= 2, got {n}")))
            }
            ActionSpace::Continuous { low, high }
                if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| l >= h) =>
            {
                Err(Error::Config("continuous bounds need low < high elementwise".into()))
            }
            _ if self.observation_dim == 0 || self.max_episode_steps == 0 => {
                Err(Error::Config("observation_dim and max_episode_steps must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The environment reached a true terminal state.
    pub terminated: bool,
    /// The episode was cut by the time limit.
    pub truncated: bool,
}

/// An episodic MDP. Actions use the encoding of [`crate::math::dist`].
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. `level_seed` selects a procedural level; envs
    /// without levels ignore it.
    fn reset(&mut self, rng: &mut EnvRng, level_seed: Option<u64>) -> Result<Vec<f64>>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Level seeds used by every reset so far.
    fn level_log(&self) -> &[u64] {
        &[]
    }
}

/// Which level pool a procedural environment draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSplit {
    #[default]
    None,
    Train,
    Test,
}

impl fmt::Display for LevelSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LevelSplit::None => "none",
            LevelSplit::Train => "train",
            LevelSplit::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvFamily {
    ChainWalk,
    PointMass,
    ProcMaze,
}

impl EnvFamily {
    pub const ALL: [EnvFamily; 3] = [EnvFamily::ChainWalk, EnvFamily::PointMass, EnvFamily::ProcMaze];

    pub fn name(&self) -> &'static str {
        match self {
            EnvFamily::ChainWalk => "chain_walk",
            EnvFamily::PointMass => "point_mass",
            EnvFamily::ProcMaze => "proc_maze",
        }
    }

    pub fn is_procedural(&self) -> bool {
        matches!(self, EnvFamily::ProcMaze)
    }

    pub fn make(&self, split: LevelSplit) -> Result<Box<dyn Environment>> {
        if split != LevelSplit::None && !self.is_procedural() {
            return Err(Error::Config(format!("{} has no level split, got split {split}", self.name())));
        }
        Ok(match self {
            EnvFamily::ChainWalk => Box::new(ChainWalk::default()),
            EnvFamily::PointMass => Box::new(PointMass::default()),
            EnvFamily::ProcMaze => Box::new(ProcMaze::new(split)),
        })
    }

    pub fn spec(&self) -> EnvSpec {
        self.make(LevelSplit::None).expect("no split").spec().clone()
    }

    /// Return of the do-nothing reference behaviour that fraction-of-teacher
    /// scores are measured against. Zero for envs with non-negative rewards.
    pub fn score_baseline(&self) -> f64 {
        match self {
            EnvFamily::PointMass => PointMass::default().idle_return(),
            _ => 0.0,
        }
    }

    /// Observation normalization is used only for the continuous-control env.
    pub fn normalizes_observations(&self) -> bool {
        matches!(self, EnvFamily::PointMass)
    }

    /// Evaluation protocol: deterministic actions except on the procedural env.
    pub fn default_eval_mode(&self) -> crate::experiments::EvalMode {
        match self {
            EnvFamily::ProcMaze => crate::experiments::EvalMode::Stochastic,
            _ => crate::experiments::EvalMode::Deterministic,
        }
    }

    pub fn default_eval_split(&self) -> LevelSplit {
        match self {
            EnvFamily::ProcMaze => LevelSplit::Test,
            _ => LevelSplit::None,
        }
    }

    pub fn default_eval_episodes(&self) -> usize {
        match self {
            EnvFamily::ProcMaze => 200,
            _ => 50,
        }
    }
}

impl fmt::Display for EnvFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "chain_walk" | "chainwalk" => Ok(EnvFamily::ChainWalk),
            "point_mass" | "pointmass" => Ok(EnvFamily::PointMass),
            "proc_maze" | "procmaze" => Ok(EnvFamily::ProcMaze),
            _ => Err(Error::Config(format!("unknown environment family {s:?}"))),
        }
    }
}

pub(crate) fn discrete_action(action: &[f64], n: usize) -> Result<usize> {
    match action {
        [a] if *a >= 0.0 && a.fract() == 0.0 && (*a as usize) < n => Ok(*a as usize),
        _ => Err(Error::Usage(format!("invalid discrete action {action:?} for {n} actions"))),
    }
}
