//! Trajectory collection, rollout storage and advantage estimation.

mod buffer;
mod collect;
mod gae;

pub use buffer::{minibatch_indices, RolloutBuffer};
pub use collect::{CollectStats, ControlPolicy, RolloutWorker};
pub use gae::gae_advantages;
