//! PPO and the distillation algorithms.

mod config;
mod losses;
mod objective;
mod optim;
mod trainer;
mod update;

pub use config::{DistillConfig, Method, PpoConfig, PpoOverrides};
pub use losses::{clip_bound, ppd_distill_term, ppd_objective, ppo_clip_active, ppo_clip_loss};
pub use objective::{batch_from_rows, evaluate, mean_kl, AgentGrads, Batch, LossStats, Objective, TeacherTargets};
pub use optim::AgentOptimizer;
pub use trainer::{distill, ppo_train, training_split, RunOptions, TrainOutcome, DEFAULT_LOG_INTERVAL};
pub use update::{ppd_update, ppo_update, student_distill_update, teacher_distill_update};
