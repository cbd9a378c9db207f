use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::EnvFamily;
use crate::error::{Error, Result};

/// PPO hyperparameters. Defaults are the teacher-training values
/// (18 envs, batch 512, gamma 0.995, GAE lambda 0.9, lr 3e-4, 4 epochs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub n_envs: usize,
    pub n_steps: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub ent_coef: f64,
    pub clip_range: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Standardize advantages per minibatch.
    pub normalize_advantage: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_envs: 18,
            n_steps: 256,
            batch_size: 512,
            gamma: 0.995,
            gae_lambda: 0.9,
            learning_rate: 3e-4,
            n_epochs: 4,
            ent_coef: 0.01,
            clip_range: 0.2,
            value_coef: 0.5,
            max_grad_norm: Some(0.5),
            normalize_advantage: true,
        }
    }
}

impl PpoConfig {
    /// Teacher-training defaults for an environment family: 256-step
    /// rollouts for the discrete chain, 512 otherwise; no entropy bonus for
    /// continuous control.
    pub fn teacher_defaults(family: EnvFamily) -> Self {
        let mut cfg = Self::default();
        match family {
            EnvFamily::ChainWalk => {}
            EnvFamily::PointMass => {
                cfg.n_steps = 512;
                cfg.ent_coef = 0.0;
            }
            EnvFamily::ProcMaze => cfg.n_steps = 512,
        }
        cfg
    }

    pub fn rollout_size(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad("clip_range must lie in (0, 1)");
        }
        if self.n_envs == 0 || self.n_steps == 0 || self.batch_size == 0 || self.n_epochs == 0 {
            return bad("n_envs, n_steps, batch_size and n_epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.learning_rate <= 0.0 || self.ent_coef < 0.0 || self.value_coef < 0.0 {
            return bad("learning_rate must be positive, ent_coef and value_coef non-negative");
        }
        if self.max_grad_norm.is_some_and(|g| g <= 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Optional replacements for individual PPO hyperparameters, layered over
/// a family or method default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_envs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gae_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ent_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_coef: Option<f64>,
    /// A non-positive value disables clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize_advantage: Option<bool>,
}

impl PpoOverrides {
    pub fn apply(&self, cfg: &mut PpoConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(
            n_envs,
            n_steps,
            batch_size,
            gamma,
            gae_lambda,
            learning_rate,
            n_epochs,
            ent_coef,
            clip_range,
            value_coef,
            normalize_advantage
        );
        if let Some(g) = self.max_grad_norm {
            cfg.max_grad_norm = (g > 0.0).then_some(g);
        }
    }

    /// Every field set to its value in `cfg`.
    pub fn resolved(cfg: &PpoConfig) -> Self {
        Self {
            n_envs: Some(cfg.n_envs),
            n_steps: Some(cfg.n_steps),
            batch_size: Some(cfg.batch_size),
            gamma: Some(cfg.gamma),
            gae_lambda: Some(cfg.gae_lambda),
            learning_rate: Some(cfg.learning_rate),
            n_epochs: Some(cfg.n_epochs),
            ent_coef: Some(cfg.ent_coef),
            clip_range: Some(cfg.clip_range),
            value_coef: Some(cfg.value_coef),
            max_grad_norm: Some(cfg.max_grad_norm.unwrap_or(0.0)),
            normalize_advantage: Some(cfg.normalize_advantage),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Proximal policy distillation.
    Ppd,
    /// Supervised distillation on student-collected trajectories.
    #[serde(alias = "sd")]
    StudentDistill,
    /// Supervised distillation on teacher-collected trajectories.
    #[serde(alias = "td")]
    TeacherDistill,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ppd, Method::StudentDistill, Method::TeacherDistill];

    pub fn short(&self) -> &'static str {
        match self {
            Method::Ppd => "ppd",
            Method::StudentDistill => "sd",
            Method::TeacherDistill => "td",
        }
    }

    /// Rollout length per env between updates: 64 for PPD, 5 for the
    /// supervised baselines.
    pub fn default_n_steps(&self) -> usize {
        match self {
            Method::Ppd => 64,
            Method::StudentDistill | Method::TeacherDistill => 5,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ppd" => Ok(Method::Ppd),
            "sd" | "student_distill" => Ok(Method::StudentDistill),
            "td" | "teacher_distill" => Ok(Method::TeacherDistill),
            _ => Err(Error::Config(format!("unknown distillation method {s:?}"))),
        }
    }
}

/// Distillation settings layered over the PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub method: Method,
    /// Weight of the distillation term (PPD only).
    pub lambda: f64,
    pub total_steps: usize,
    pub ppo: PpoConfig,
}

impl DistillConfig {
    /// Distillation defaults: teacher PPO settings with gamma 0.999, no
    /// entropy bonus and the method's rollout length.
    pub fn new(method: Method, family: EnvFamily, total_steps: usize) -> Self {
        let mut ppo = PpoConfig::teacher_defaults(family);
        ppo.gamma = 0.999;
        ppo.ent_coef = 0.0;
        ppo.n_steps = method.default_n_steps();
        Self { method, lambda: 1.0, total_steps, ppo }
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PpoConfig::default().validate().unwrap();
        for m in Method::ALL {
            DistillConfig::new(m, EnvFamily::PointMass, 1000).validate().unwrap();
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let c = PpoConfig { clip_range: 1.0, ..PpoConfig::default() };
        assert!(c.validate().is_err());
        let mut d = DistillConfig::new(Method::Ppd, EnvFamily::ChainWalk, 10);
        d.lambda = 0.0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn method_round_trips_through_strings() {
        for m in Method::ALL {
            assert_eq!(m.short().parse::<Method>().unwrap(), m);
        }
        assert!("dagger".parse::<Method>().is_err());
    }
}
