use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_geomean, crossing_step};
use super::eval::{evaluate, fraction_of_teacher, EvalProtocol};
use super::sizes::{param_ratio, SizeVariant};
use crate::algo::{distill, DistillConfig, Method, PpoOverrides, RunOptions};
use crate::envs::EnvFamily;
use crate::error::{Error, Result};
use crate::io::{AgentCheckpoint, MetricsRow, MetricsWriter};

/// Fraction of the teacher score that counts as "caught up".
pub const CROSSING_THRESHOLD: f64 = 0.9;

/// Lambda values of the default sweep.
pub const DEFAULT_LAMBDAS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

/// Settings shared by every distillation run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSettings {
    pub total_steps: usize,
    /// PPD distillation weight.
    pub lambda: f64,
    pub log_interval: usize,
    pub log_wall_time: bool,
    /// Applied on top of each method's defaults.
    pub overrides: PpoOverrides,
}

impl DistillSettings {
    pub fn new(total_steps: usize) -> Self {
        Self {
            total_steps,
            lambda: 1.0,
            log_interval: crate::algo::DEFAULT_LOG_INTERVAL,
            log_wall_time: false,
            overrides: PpoOverrides::default(),
        }
    }

    pub fn config(&self, method: Method, family: EnvFamily, lambda: f64) -> DistillConfig {
        let mut cfg = DistillConfig::new(method, family, self.total_steps);
        cfg.lambda = lambda;
        self.overrides.apply(&mut cfg.ppo);
        cfg
    }
}

/// Reference scores of a teacher: under the evaluation protocol and, for
/// training curves, stochastic play on the training distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherScores {
    pub eval: f64,
    pub reference: f64,
}

impl TeacherScores {
    pub fn measure(teacher: &AgentCheckpoint, seed: u64) -> Result<Self> {
        let family = teacher.agent.env_family;
        Ok(Self {
            eval: evaluate(&teacher.agent, &EvalProtocol::default_for(family, seed))?.mean,
            reference: evaluate(&teacher.agent, &EvalProtocol::training_reference(family, seed))?.mean,
        })
    }
}

/// Identifies one distillation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub env: EnvFamily,
    pub method: Method,
    pub size: SizeVariant,
    pub seed: u64,
    /// Distillation weight; `None` for methods that do not use it.
    pub lambda: Option<f64>,
}

impl CellKey {
    pub fn new(env: EnvFamily, method: Method, size: SizeVariant, seed: u64, lambda: f64) -> Self {
        Self { env, method, size, seed, lambda: (method == Method::Ppd).then_some(lambda) }
    }

    pub fn run_id(&self) -> String {
        let mut id = format!("{}_{}_{}_seed{}", self.env, self.method, self.size, self.seed);
        if let Some(l) = self.lambda {
            write!(id, "_lambda{l}").expect("string write");
        }
        id
    }

    fn sort_key(&self) -> (EnvFamily, SizeVariant, Method, u64, u64) {
        (self.env, self.size, self.method, self.seed, self.lambda.unwrap_or(0.0).to_bits())
    }
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub run_id: String,
    pub param_ratio: f64,
    pub student_score: f64,
    pub teacher_score: f64,
    pub fraction_of_teacher: f64,
    /// Last logged step below 90% of the teacher; `None` if never reached.
    pub crossing_step: Option<u64>,
    pub final_train_return: f64,
    pub env_steps: u64,
    pub error: Option<String>,
}

impl GridRow {
    fn failed(key: CellKey, error: String) -> Self {
        Self {
            run_id: key.run_id(),
            key,
            param_ratio: f64::NAN,
            student_score: f64::NAN,
            teacher_score: f64::NAN,
            fraction_of_teacher: f64::NAN,
            crossing_step: None,
            final_train_return: f64::NAN,
            env_steps: 0,
            error: Some(error),
        }
    }
}

/// A finished run: its table row, the student and the training curve.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub row: GridRow,
    pub student: AgentCheckpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Distills `teacher` for one cell and scores the student against
/// `scores`, which normally belong to the same teacher (for corrupted
/// teachers, pass the original teacher's scores). With `out_dir` the
/// metrics file and student checkpoint go to `out_dir/<run_id>/`.
pub fn run_cell(
    teacher: &AgentCheckpoint,
    scores: &TeacherScores,
    key: CellKey,
    settings: &DistillSettings,
    out_dir: Option<&Path>,
) -> Result<CellResult> {
    let family = teacher.agent.env_family;
    if family != key.env {
        return Err(Error::Config(format!("teacher is for {family}, cell is for {}", key.env)));
    }
    let teacher_hidden = teacher.agent.architecture().hidden().to_vec();
    let hidden = key.size.realize(family, &teacher_hidden)?;
    let cfg = settings.config(key.method, family, key.lambda.unwrap_or(settings.lambda));
    let run_id = key.run_id();
    let mut opts = RunOptions::new(run_id.clone(), key.seed, settings.total_steps);
    opts.log_interval = settings.log_interval;
    opts.log_wall_time = settings.log_wall_time;

    let run_dir: Option<PathBuf> = out_dir.map(|d| d.join(&run_id));
    let mut writer = match &run_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(MetricsWriter::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let mut sink = |row: &MetricsRow| match writer.as_mut() {
        Some(w) => w.write(row),
        None => Ok(()),
    };
    let outcome = distill(&teacher.agent, &hidden, &cfg, &opts, &mut sink)?;

    let report = evaluate(&outcome.agent, &EvalProtocol::default_for(family, key.seed))?;
    let baseline = family.score_baseline();
    let row = GridRow {
        key,
        run_id: run_id.clone(),
        param_ratio: param_ratio(family, &hidden, &teacher_hidden),
        student_score: report.mean,
        teacher_score: scores.eval,
        fraction_of_teacher: fraction_of_teacher(report.mean, scores.eval, baseline),
        crossing_step: crossing_step(&outcome.rows, scores.reference, baseline, CROSSING_THRESHOLD),
        final_train_return: outcome.rows.last().map_or(f64::NAN, |r| r.mean_episodic_return),
        env_steps: outcome.env_steps as u64,
        error: None,
    };
    let mut student = AgentCheckpoint::new(outcome.agent)
        .with_seed(key.seed)
        .with_tag("role", "student")
        .with_tag("method", key.method)
        .with_tag("size", key.size);
    if let Some(l) = key.lambda {
        student = student.with_tag("lambda", l);
    }
    if let Some(dir) = &run_dir {
        student.save(&dir.join("student.ckpt"))?;
    }
    Ok(CellResult { row, student, metrics: outcome.rows })
}

/// The cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub envs: Vec<EnvFamily>,
    pub methods: Vec<Method>,
    pub sizes: Vec<SizeVariant>,
    pub seeds: Vec<u64>,
}

impl GridSpec {
    pub fn cells(&self, lambda: f64) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &env in &self.envs {
            for &size in &self.sizes {
                for &method in &self.methods {
                    for &seed in &self.seeds {
                        cells.push(CellKey::new(env, method, size, seed, lambda));
                    }
                }
            }
        }
        cells
    }
}

/// Runs every cell of `spec` with up to `workers` threads. Teachers are
/// looked up by `(env, seed)`; a missing teacher or a failed run becomes an
/// error row. Rows come back sorted by cell key regardless of scheduling.
pub fn run_distillation_grid(
    teachers: &BTreeMap<(EnvFamily, u64), AgentCheckpoint>,
    spec: &GridSpec,
    settings: &DistillSettings,
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<GridRow>> {
    let mut scores = BTreeMap::new();
    for (key, teacher) in teachers {
        if spec.envs.contains(&key.0) && spec.seeds.contains(&key.1) {
            scores.insert(*key, TeacherScores::measure(teacher, key.1)?);
        }
    }
    let cells = spec.cells(settings.lambda);
    let run = |key: &CellKey| -> GridRow {
        let Some(teacher) = teachers.get(&(key.env, key.seed)) else {
            return GridRow::failed(*key, format!("no teacher for {} seed {}", key.env, key.seed));
        };
        match run_cell(teacher, &scores[&(key.env, key.seed)], *key, settings, out_dir) {
            Ok(r) => r.row,
            Err(e) => GridRow::failed(*key, e.to_string()),
        }
    };
    let mut rows: Vec<GridRow> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };
    rows.sort_by_key(|r| r.key.sort_key());
    Ok(rows)
}

/// One lambda value of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub row: GridRow,
    pub curve: Vec<MetricsRow>,
}

/// PPD runs of one teacher at each lambda, sharing seed, size and every
/// other setting. Each run is the same code path as the grid's PPD cell.
pub fn run_lambda_sweep(
    teacher: &AgentCheckpoint,
    scores: &TeacherScores,
    size: SizeVariant,
    seed: u64,
    lambdas: &[f64],
    settings: &DistillSettings,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepPoint>> {
    if lambdas.is_empty() || lambdas.iter().any(|l| l.is_nan() || *l <= 0.0) {
        return Err(Error::Config("lambda sweep needs positive lambda values".into()));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let key = CellKey::new(teacher.agent.env_family, Method::Ppd, size, seed, lambda);
            let r = run_cell(teacher, scores, key, settings, out_dir)?;
            Ok(SweepPoint { lambda, row: r.row, curve: r.metrics })
        })
        .collect()
}

/// Geometric mean of fraction-of-teacher over the successful rows matching
/// `pred`, with the count of excluded rows.
pub fn geomean_where(rows: &[GridRow], pred: impl Fn(&GridRow) -> bool) -> (f64, usize) {
    let values: Vec<f64> =
        rows.iter().filter(|r| r.error.is_none() && pred(r)).map(|r| r.fraction_of_teacher).collect();
    aggregate_geomean(&values)
}

/// Renders rows as a text table: one line per environment plus a
/// geometric-mean line, one column per (size, method), entries are
/// geometric means of fraction-of-teacher over seeds.
pub fn render_fraction_table(title: &str, rows: &[GridRow]) -> String {
    let mut envs: Vec<EnvFamily> = rows.iter().map(|r| r.key.env).collect();
    envs.sort();
    envs.dedup();
    let mut cols: Vec<(SizeVariant, Method)> = rows.iter().map(|r| (r.key.size, r.key.method)).collect();
    cols.sort();
    cols.dedup();

    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    let mut header = format!("{:<12}", "");
    for (size, method) in &cols {
        write!(header, " {:>12}", format!("{size}/{method}")).unwrap();
    }
    writeln!(out, "{header}").unwrap();
    let cell = |v: (f64, usize)| {
        if v.0.is_nan() {
            format!("{:>12}", "-")
        } else {
            format!("{:>12.3}", v.0)
        }
    };
    for env in &envs {
        let mut line = format!("{:<12}", env.name());
        for (size, method) in &cols {
            let v = geomean_where(rows, |r| r.key.env == *env && r.key.size == *size && r.key.method == *method);
            write!(line, " {}", cell(v)).unwrap();
        }
        writeln!(out, "{line}").unwrap();
    }
    let mut line = format!("{:<12}", "geomean");
    for (size, method) in &cols {
        write!(line, " {}", cell(geomean_where(rows, |r| r.key.size == *size && r.key.method == *method))).unwrap();
    }
    writeln!(out, "{line}").unwrap();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        writeln!(out, "({failed} failed run(s) excluded)").unwrap();
    }
    out
}

/// Machine-readable summary: every row plus the per-column geometric means.
pub fn summary_json(rows: &[GridRow]) -> serde_json::Value {
    let mut columns = BTreeMap::new();
    for r in rows {
        let name = format!("{}/{}", r.key.size, r.key.method);
        columns.entry(name).or_insert_with(|| {
            let (g, dropped) = geomean_where(rows, |x| x.key.size == r.key.size && x.key.method == r.key.method);
            serde_json::json!({ "geomean_fraction": g, "excluded": dropped })
        });
    }
    serde_json::json!({ "rows": rows, "columns": columns })
}
