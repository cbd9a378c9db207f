use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppd::algo::{distill, ppo_train, Method, RunOptions};
use ppd::envs::LevelSplit;
use ppd::experiments::{
    corrupt_parameters, evaluate, render_fraction_table, run_distillation_grid, run_lambda_sweep, summary_json,
    CellKey, EvalMode, GridRow, SizeVariant, TeacherScores,
};
use ppd::io::{AgentCheckpoint, ExperimentConfig, MetricsWriter, OUTPUT_ROOT_VAR};
use ppd::seeding::{derive_seed, rng_for, tags};
use ppd::{EnvFamily, Error, Result};

/// Teacher training, policy distillation and evaluation on toy environments.
#[derive(Debug, Parser)]
#[command(name = "ppd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set distill.lambda=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root directory for run outputs.
    #[arg(long, env = OUTPUT_ROOT_VAR, default_value = "runs", global = true)]
    output_root: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a teacher with PPO.
    TrainTeacher {
        /// Environment: chain_walk, point_mass or proc_maze.
        #[arg(long)]
        env: Option<EnvFamily>,
        /// Run seed [config: seed].
        #[arg(long)]
        seed: Option<u64>,
        /// Env steps [config: teacher.total_steps, else the per-env budget].
        #[arg(long)]
        steps: Option<usize>,
        /// Checkpoint path (default: <output-root>/<run>/teacher.ckpt).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Distill a teacher checkpoint into a new student.
    Distill {
        /// Teacher checkpoint; fixes the environment.
        #[arg(long)]
        teacher: PathBuf,
        /// ppd, sd or td [config: distill.method].
        #[arg(long)]
        method: Option<Method>,
        /// Student size: smaller, same or larger [config: distill.size].
        #[arg(long)]
        size: Option<SizeVariant>,
        /// PPD distillation weight [config: distill.lambda].
        #[arg(long)]
        lambda: Option<f64>,
        /// Run seed [config: seed].
        #[arg(long)]
        seed: Option<u64>,
        /// Env steps [config: distill.total_steps].
        #[arg(long)]
        steps: Option<usize>,
        /// Run directory (default: <output-root>/<run id>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Add Gaussian noise to a checkpoint's policy parameters.
    Corrupt {
        /// Checkpoint to corrupt.
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the corrupted checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Noise standard deviation.
        #[arg(long, default_value_t = ppd::experiments::DEFAULT_SIGMA)]
        sigma: f64,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a checkpoint and write an evaluation report.
    Evaluate {
        /// Checkpoint to evaluate.
        #[arg(long)]
        ckpt: PathBuf,
        /// Teacher to score against (fills fraction_of_teacher).
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Episodes [config: eval.episodes].
        #[arg(long)]
        episodes: Option<usize>,
        /// deterministic or stochastic [config: eval.mode].
        #[arg(long)]
        mode: Option<EvalMode>,
        /// Level split: none, train or test [config: eval.split].
        #[arg(long)]
        split: Option<LevelSplit>,
        /// Evaluation seed [config: seed].
        #[arg(long)]
        seed: Option<u64>,
        /// Report path (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// PPD runs of one teacher over several lambda values.
    SweepLambda {
        /// Teacher checkpoint; fixes the environment.
        #[arg(long)]
        teacher: PathBuf,
        /// Comma-separated lambda values [config: sweep.lambdas].
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Student size [config: distill.size].
        #[arg(long)]
        size: Option<SizeVariant>,
        /// Run seed [config: seed].
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: <output-root>/sweep_<env>_<size>_seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Every method x size x seed distillation run for a set of teachers.
    Grid {
        /// Teacher checkpoints; environment and seed are read from each.
        #[arg(long = "teacher", required = true)]
        teachers: Vec<PathBuf>,
        /// Parallel runs [config: grid.workers].
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (default: <output-root>/grid).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render stored result rows as fraction-of-teacher tables.
    Report {
        /// `results.json` files written by `grid` or `sweep-lambda`.
        #[arg(required = true)]
        rows: Vec<PathBuf>,
        /// Table title.
        #[arg(long, default_value = "Fraction of teacher score")]
        title: String,
        /// Also write the JSON summary here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingKey(_) => 3,
        Error::MissingInput(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(common: &Common, env: Option<EnvFamily>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), &common.overrides)?;
    if env.is_some() {
        cfg.env = env;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.env()?;
    cfg.resolve();
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainTeacher { env, seed, steps, out, common } => {
            let mut cfg = load_config(&common, env, seed)?;
            if steps.is_some() {
                cfg.teacher.total_steps = steps;
            }
            let family = cfg.env()?;
            let run_id = format!("teacher_{family}_seed{}", cfg.seed);
            let ckpt_path = out.unwrap_or_else(|| common.output_root.join(&run_id).join("teacher.ckpt"));
            let dir = ckpt_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            cfg.write_resolved(&dir)?;
            let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
            let mut opts = RunOptions::new(run_id, cfg.seed, cfg.teacher_steps()?);
            opts.log_interval = cfg.log_interval;
            opts.log_wall_time = cfg.log_wall_time;
            let outcome = ppo_train(family, &cfg.teacher.hidden, &cfg.teacher_ppo()?, &opts, &mut |row| {
                log::info!("{} steps: mean return {:.4}", row.env_steps, row.mean_episodic_return);
                writer.write(row)
            })?;
            AgentCheckpoint::new(outcome.agent).with_seed(cfg.seed).with_tag("role", "teacher").save(&ckpt_path)?;
            println!("{}", ckpt_path.display());
        }
        Command::Distill { teacher, method, size, lambda, seed, steps, out, common } => {
            let teacher = AgentCheckpoint::load(&teacher)?;
            let mut cfg = load_config(&common, Some(teacher.agent.env_family), seed)?;
            if let Some(m) = method {
                cfg.distill.method = m;
            }
            if let Some(s) = size {
                cfg.distill.size = s;
            }
            if let Some(l) = lambda {
                cfg.distill.lambda = l;
            }
            if let Some(s) = steps {
                cfg.distill.total_steps = s;
            }
            let family = cfg.env()?;
            let key = CellKey::new(family, cfg.distill.method, cfg.distill.size, cfg.seed, cfg.distill.lambda);
            let dir = out.unwrap_or_else(|| common.output_root.join(key.run_id()));
            cfg.write_resolved(&dir)?;
            let hidden = cfg.distill.size.realize(family, teacher.agent.architecture().hidden())?;
            let dcfg = cfg.distill_config(cfg.distill.method)?;
            let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
            let mut opts = RunOptions::new(key.run_id(), cfg.seed, cfg.distill.total_steps);
            opts.log_interval = cfg.log_interval;
            opts.log_wall_time = cfg.log_wall_time;
            let outcome = distill(&teacher.agent, &hidden, &dcfg, &opts, &mut |row| {
                log::info!("{} steps: mean return {:.4}", row.env_steps, row.mean_episodic_return);
                writer.write(row)
            })?;
            let mut student = AgentCheckpoint::new(outcome.agent)
                .with_seed(cfg.seed)
                .with_tag("role", "student")
                .with_tag("method", key.method)
                .with_tag("size", key.size);
            if let Some(l) = key.lambda {
                student = student.with_tag("lambda", l);
            }
            student.save(&dir.join("student.ckpt"))?;
            println!("{}", dir.join("student.ckpt").display());
        }
        Command::Corrupt { input, out, sigma, seed } => {
            let ckpt = AgentCheckpoint::load(&input)?;
            let mut rng = rng_for(derive_seed(seed, tags::CORRUPT), 0);
            corrupt_parameters(&ckpt, sigma, &mut rng)?.save(&out)?;
            println!("{}", out.display());
        }
        Command::Evaluate { ckpt, teacher, episodes, mode, split, seed, out, common } => {
            let student = AgentCheckpoint::load(&ckpt)?;
            let teacher = teacher.map(|p| AgentCheckpoint::load_for(&p, student.agent.env_family)).transpose()?;
            let cfg = load_config(&common, Some(student.agent.env_family), seed)?;
            let mut protocol = cfg.eval_protocol()?;
            protocol.episodes = episodes.unwrap_or(protocol.episodes);
            protocol.mode = mode.unwrap_or(protocol.mode);
            protocol.split = split.unwrap_or(protocol.split);
            let mut report = evaluate(&student.agent, &protocol)?;
            if let Some(t) = teacher {
                report = report.with_teacher(evaluate(&t.agent, &protocol)?.mean);
            }
            let json = serde_json::to_value(&report)?;
            match out {
                Some(p) => {
                    write_json(&p, &json)?;
                    println!("{}", p.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&json)?),
            }
        }
        Command::SweepLambda { teacher, lambdas, size, seed, out, common } => {
            let teacher = AgentCheckpoint::load(&teacher)?;
            let mut cfg = load_config(&common, Some(teacher.agent.env_family), seed)?;
            if let Some(l) = lambdas {
                cfg.sweep.lambdas = l;
            }
            let size = size.unwrap_or(cfg.distill.size);
            let dir = out.unwrap_or_else(|| {
                common.output_root.join(format!("sweep_{}_{size}_seed{}", teacher.agent.env_family, cfg.seed))
            });
            cfg.write_resolved(&dir)?;
            let scores = TeacherScores::measure(&teacher, cfg.seed)?;
            let points = run_lambda_sweep(
                &teacher,
                &scores,
                size,
                cfg.seed,
                &cfg.sweep.lambdas,
                &cfg.distill_settings(),
                Some(&dir),
            )?;
            let rows: Vec<GridRow> = points.iter().map(|p| p.row.clone()).collect();
            write_json(&dir.join("results.json"), &serde_json::to_value(&rows)?)?;
            for p in &points {
                println!(
                    "lambda {:>5}: crossing step {:>8}  final fraction {:.3}",
                    p.lambda,
                    p.row.crossing_step.map_or("never".into(), |s| s.to_string()),
                    p.row.fraction_of_teacher
                );
            }
        }
        Command::Grid { teachers, workers, out, common } => {
            let mut map = BTreeMap::new();
            let mut envs = Vec::new();
            for path in &teachers {
                let t = AgentCheckpoint::load(path)?;
                let seed = t.seed.ok_or_else(|| Error::Config(format!("{} records no seed", path.display())))?;
                envs.push(t.agent.env_family);
                map.insert((t.agent.env_family, seed), t);
            }
            envs.sort();
            envs.dedup();
            let cfg = load_config(&common, envs.first().copied(), None)?;
            let mut spec = cfg.grid_spec()?;
            spec.envs = envs;
            let dir = out.unwrap_or_else(|| common.output_root.join("grid"));
            cfg.write_resolved(&dir)?;
            let rows = run_distillation_grid(
                &map,
                &spec,
                &cfg.distill_settings(),
                workers.unwrap_or(cfg.grid.workers),
                Some(&dir),
            )?;
            write_json(&dir.join("results.json"), &serde_json::to_value(&rows)?)?;
            print!("{}", render_fraction_table("Fraction of teacher score", &rows));
        }
        Command::Report { rows, title, json } => {
            let mut all: Vec<GridRow> = Vec::new();
            for path in &rows {
                if !path.exists() {
                    return Err(Error::MissingInput(path.clone()));
                }
                let mut part: Vec<GridRow> = serde_json::from_str(&fs::read_to_string(path)?)?;
                all.append(&mut part);
            }
            print!("{}", render_fraction_table(&title, &all));
            if let Some(p) = json {
                write_json(&p, &summary_json(&all))?;
            }
        }
    }
    Ok(())
}
