//! Checkpoints, experiment configuration and metrics files.

mod checkpoint;
mod config;
mod metrics;

pub use checkpoint::{AgentCheckpoint, FORMAT_VERSION};
pub use config::{
    default_teacher_steps, CorruptSection, DistillSection, EvalSection, ExperimentConfig, GridSection, SweepSection,
    TeacherSection, OUTPUT_ROOT_VAR,
};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
