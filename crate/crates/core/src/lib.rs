//! Proximal policy distillation with PPO teachers, the student- and
//! teacher-driven distillation baselines, small dense networks with exact
//! gradients and toy environments to run them on.

pub mod agent;
pub mod algo;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod io;
pub mod math;
pub mod rollout;
pub mod seeding;

pub use agent::{Agent, Architecture};
pub use envs::{EnvFamily, LevelSplit};
pub use error::{Error, Result};
