//! Experiment configuration: a TOML file plus `key=value` overrides,
//! resolved against built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algo::{DistillConfig, Method, PpoConfig, PpoOverrides};
use crate::envs::{EnvFamily, LevelSplit};
use crate::error::{Error, Result};
use crate::experiments::{
    DistillSettings, EvalMode, EvalProtocol, GridSpec, SizeVariant, DEFAULT_LAMBDAS, DEFAULT_SIGMA, TEACHER_HIDDEN,
};

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_VAR: &str = "PPD_OUTPUT_ROOT";

/// Default teacher training budget per environment family.
pub fn default_teacher_steps(family: EnvFamily) -> usize {
    match family {
        EnvFamily::ChainWalk => 150_000,
        EnvFamily::PointMass => 300_000,
        EnvFamily::ProcMaze => 500_000,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    pub hidden: Vec<usize>,
    /// Defaults to the family budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    pub ppo: PpoOverrides,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self { hidden: TEACHER_HIDDEN.to_vec(), total_steps: None, ppo: PpoOverrides::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub method: Method,
    pub size: SizeVariant,
    pub lambda: f64,
    pub total_steps: usize,
    /// Applied on top of the method defaults.
    pub ppo: PpoOverrides,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            method: Method::Ppd,
            size: SizeVariant::Same,
            lambda: 1.0,
            total_steps: 100_000,
            ppo: PpoOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<EvalMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<LevelSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptSection {
    pub sigma: f64,
    /// Accepted range of the score kept by a corrupted teacher.
    pub min_retained: f64,
    pub max_retained: f64,
    pub max_attempts: u64,
}

impl Default for CorruptSection {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA, min_retained: 0.3, max_retained: 0.85, max_attempts: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { lambdas: DEFAULT_LAMBDAS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub sizes: Vec<SizeVariant>,
    pub workers: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            seeds: vec![100, 200, 300, 400, 500],
            methods: Method::ALL.to_vec(),
            sizes: SizeVariant::ALL.to_vec(),
            workers: 1,
        }
    }
}

/// Every hyperparameter of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvFamily>,
    pub seed: u64,
    pub log_interval: usize,
    /// Record elapsed time in metrics files (breaks bit-identical reruns).
    pub log_wall_time: bool,
    pub teacher: TeacherSection,
    pub distill: DistillSection,
    pub eval: EvalSection,
    pub corrupt: CorruptSection,
    pub sweep: SweepSection,
    pub grid: GridSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: None,
            seed: 100,
            log_interval: crate::algo::DEFAULT_LOG_INTERVAL,
            log_wall_time: false,
            teacher: TeacherSection::default(),
            distill: DistillSection::default(),
            eval: EvalSection::default(),
            corrupt: CorruptSection::default(),
            sweep: SweepSection::default(),
            grid: GridSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `env` with every optional setting filled in.
    pub fn defaults_for(env: EnvFamily) -> Self {
        let mut c = Self { env: Some(env), ..Self::default() };
        c.resolve();
        c
    }

    /// Reads an optional config file and applies `key=value` overrides.
    /// Override keys are dotted paths (`distill.lambda`, `teacher.ppo.gamma`)
    /// that must name an existing setting.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::MissingInput(p.to_path_buf()));
                }
                toml::from_str(&std::fs::read_to_string(p)?)?
            }
            None => toml::Table::new(),
        };
        let template = toml::Table::try_from(Self::defaults_for(EnvFamily::ChainWalk))
            .map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, value) =
                item.split_once('=').ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            set_path(&mut table, &template, key.trim(), parse_value(value.trim()))?;
        }
        let mut cfg: Self = table.try_into()?;
        cfg.resolve();
        Ok(cfg)
    }

    /// Fills every optional setting with its effective value, so that the
    /// serialized result reproduces the run without relying on defaults.
    pub fn resolve(&mut self) {
        let Some(env) = self.env else { return };
        self.teacher.total_steps.get_or_insert(default_teacher_steps(env));
        let mut teacher = PpoConfig::teacher_defaults(env);
        self.teacher.ppo.apply(&mut teacher);
        self.teacher.ppo = PpoOverrides::resolved(&teacher);
        let proto = EvalProtocol::default_for(env, self.seed);
        self.eval.episodes.get_or_insert(proto.episodes);
        self.eval.mode.get_or_insert(proto.mode);
        self.eval.split.get_or_insert(proto.split);
    }

    pub fn env(&self) -> Result<EnvFamily> {
        self.env.ok_or_else(|| Error::MissingKey("env".into()))
    }

    pub fn teacher_ppo(&self) -> Result<PpoConfig> {
        let mut cfg = PpoConfig::teacher_defaults(self.env()?);
        self.teacher.ppo.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn teacher_steps(&self) -> Result<usize> {
        Ok(self.teacher.total_steps.unwrap_or(default_teacher_steps(self.env()?)))
    }

    pub fn distill_settings(&self) -> DistillSettings {
        DistillSettings {
            total_steps: self.distill.total_steps,
            lambda: self.distill.lambda,
            log_interval: self.log_interval,
            log_wall_time: self.log_wall_time,
            overrides: self.distill.ppo.clone(),
        }
    }

    pub fn distill_config(&self, method: Method) -> Result<DistillConfig> {
        let cfg = self.distill_settings().config(method, self.env()?, self.distill.lambda);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_protocol(&self) -> Result<EvalProtocol> {
        let d = EvalProtocol::default_for(self.env()?, self.seed);
        Ok(EvalProtocol {
            episodes: self.eval.episodes.unwrap_or(d.episodes),
            mode: self.eval.mode.unwrap_or(d.mode),
            split: self.eval.split.unwrap_or(d.split),
            seed: self.seed,
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec {
            envs: vec![self.env()?],
            methods: self.grid.methods.clone(),
            sizes: self.grid.sizes.clone(),
            seeds: self.grid.seeds.clone(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration as `config.toml` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let mut resolved = self.clone();
        resolved.resolve();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), resolved.to_toml()?)?;
        Ok(())
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, template: &toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut tpl = template;
    let mut cur = table;
    for p in parents {
        tpl = tpl.get(*p).and_then(toml::Value::as_table).ok_or_else(|| Error::MissingKey(key.to_string()))?;
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p} is not a table")))?;
    }
    if !tpl.contains_key(*last) {
        return Err(Error::MissingKey(key.to_string()));
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
