use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::envs::{EnvFamily, LevelSplit};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_for, tags};

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Distribution mode (argmax / mean).
    Deterministic,
    /// Sampled from the policy.
    Stochastic,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Deterministic => "deterministic",
            EvalMode::Stochastic => "stochastic",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deterministic" | "det" => Ok(EvalMode::Deterministic),
            "stochastic" | "sto" => Ok(EvalMode::Stochastic),
            _ => Err(Error::Config(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

impl FromStr for LevelSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(LevelSplit::None),
            "train" => Ok(LevelSplit::Train),
            "test" => Ok(LevelSplit::Test),
            _ => Err(Error::Config(format!("unknown level split {s:?}"))),
        }
    }
}

/// Evaluation protocol: episode count, action selection, level pool and
/// the seed of the evaluation streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub episodes: usize,
    pub mode: EvalMode,
    pub split: LevelSplit,
    pub seed: u64,
}

impl EvalProtocol {
    /// Per-family defaults: 50 deterministic episodes, or 200 stochastic
    /// episodes on test levels for the procedural maze.
    pub fn default_for(family: EnvFamily, seed: u64) -> Self {
        Self {
            episodes: family.default_eval_episodes(),
            mode: family.default_eval_mode(),
            split: family.default_eval_split(),
            seed,
        }
    }

    /// Stochastic play on the training distribution; the reference used
    /// for training curves.
    pub fn training_reference(family: EnvFamily, seed: u64) -> Self {
        Self {
            episodes: family.default_eval_episodes(),
            mode: EvalMode::Stochastic,
            split: crate::algo::training_split(family),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: EnvFamily,
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the episode returns.
    pub std: f64,
    /// Set once compared against a teacher under the same protocol.
    pub fraction_of_teacher: Option<f64>,
    pub mode: EvalMode,
    pub level_split: LevelSplit,
    pub level_seeds: Vec<u64>,
}

impl EvalReport {
    /// Scores this report against a teacher's mean return.
    pub fn with_teacher(mut self, teacher_mean: f64) -> Self {
        self.fraction_of_teacher = Some(fraction_of_teacher(self.mean, teacher_mean, self.env.score_baseline()));
        self
    }
}

/// `(student - baseline) / (teacher - baseline)`; with a zero baseline this
/// is the plain ratio of mean returns.
pub fn fraction_of_teacher(student: f64, teacher: f64, baseline: f64) -> f64 {
    (student - baseline) / (teacher - baseline)
}

/// Runs `protocol.episodes` complete episodes of `agent` on a single env and
/// reports raw returns. Environment and action randomness come from two
/// streams derived from `protocol.seed`, so two agents evaluated under the
/// same protocol face the same levels and start states.
pub fn evaluate(agent: &Agent, protocol: &EvalProtocol) -> Result<EvalReport> {
    if protocol.episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let family = agent.env_family;
    let mut env = family.make(protocol.split)?;
    let mut env_rng = rng_for(derive_seed(protocol.seed, tags::EVAL), tags::ENVS);
    let mut action_rng = rng_for(derive_seed(protocol.seed, tags::EVAL), tags::ACTIONS);
    let mut returns = Vec::with_capacity(protocol.episodes);
    for _ in 0..protocol.episodes {
        let mut obs = env.reset(&mut env_rng, None)?;
        let mut total = 0.0;
        loop {
            let dist = agent.distribution(&agent.normalize_obs(&obs)?)?;
            let action = match protocol.mode {
                EvalMode::Deterministic => dist.mode(),
                EvalMode::Stochastic => dist.sample(&mut action_rng),
            };
            let step = env.step(&action)?;
            total += step.reward;
            if step.terminated || step.truncated {
                break;
            }
            obs = step.observation;
        }
        if !total.is_finite() {
            return Err(Error::Divergence(format!("evaluation return {total}")));
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalReport {
        env: family,
        returns,
        mean,
        std,
        fraction_of_teacher: None,
        mode: protocol.mode,
        level_split: protocol.split,
        level_seeds: env.level_log().to_vec(),
    })
}
