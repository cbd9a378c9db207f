//! Experiment drivers: evaluation, corrupted teachers, size variants,
//! distillation grids and lambda sweeps.

mod aggregate;
mod corrupt;
mod eval;
mod grid;
mod sizes;

pub use aggregate::{aggregate_geomean, crossing_key, crossing_step};
pub use corrupt::{corrupt_parameters, corrupt_within_band, CorruptedTeacher, DEFAULT_SIGMA};
pub use eval::{evaluate, fraction_of_teacher, EvalMode, EvalProtocol, EvalReport};
pub use grid::{
    geomean_where, render_fraction_table, run_cell, run_distillation_grid, run_lambda_sweep, summary_json, CellKey,
    CellResult, DistillSettings, GridRow, GridSpec, SweepPoint, TeacherScores, CROSSING_THRESHOLD, DEFAULT_LAMBDAS,
};
pub use sizes::{param_ratio, SizeVariant, TEACHER_HIDDEN};
