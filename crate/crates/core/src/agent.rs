//! Actor-critic agent: separate policy and value networks plus the
//! observation and reward normalization statistics they were trained with.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{ActionSpace, EnvFamily, RunningNormalizer};
use crate::error::{check_dim, Error, Result};
use crate::math::{param_count, DenseNet, HeadKind, PolicyDistribution};

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_OUT_GAIN: f64 = 0.01;
const VALUE_OUT_GAIN: f64 = 1.0;

/// Architecture descriptor stored with every checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub policy_layers: Vec<usize>,
    pub value_layers: Vec<usize>,
    pub hidden_activation: crate::math::Activation,
    pub output_activation: crate::math::Activation,
    pub head: HeadKind,
}

impl Architecture {
    pub fn for_env(family: EnvFamily, hidden: &[usize]) -> Self {
        let spec = family.spec();
        let head = match &spec.action_space {
            ActionSpace::Discrete { n } => HeadKind::Categorical { num_actions: *n },
            ActionSpace::Continuous { low, .. } => HeadKind::Gaussian { action_dim: low.len() },
        };
        let mut policy_layers = vec![spec.observation_dim];
        policy_layers.extend_from_slice(hidden);
        let mut value_layers = policy_layers.clone();
        policy_layers.push(head.net_outputs());
        value_layers.push(1);
        Self {
            policy_layers,
            value_layers,
            hidden_activation: crate::math::Activation::Relu,
            output_activation: crate::math::Activation::Identity,
            head,
        }
    }

    pub fn hidden(&self) -> &[usize] {
        &self.policy_layers[1..self.policy_layers.len() - 1]
    }

    /// Policy, log-std and value parameters together.
    pub fn param_count(&self) -> usize {
        param_count(&self.policy_layers) + self.head.log_std_len() + param_count(&self.value_layers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub env_family: EnvFamily,
    pub head: HeadKind,
    pub policy: DenseNet,
    /// State-independent log standard deviations (Gaussian heads only).
    pub log_std: Vec<f64>,
    pub value: DenseNet,
    pub obs_norm: Option<RunningNormalizer>,
    /// Statistics of the discounted return used for reward scaling.
    pub reward_norm: Option<RunningNormalizer>,
}

impl Agent {
    /// Freshly initialized agent for `family` with the given hidden sizes.
    pub fn new<R: Rng + ?Sized>(family: EnvFamily, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let arch = Architecture::for_env(family, hidden);
        let policy = DenseNet::orthogonal(&arch.policy_layers, HIDDEN_GAIN, POLICY_OUT_GAIN, rng)?;
        let value = DenseNet::orthogonal(&arch.value_layers, HIDDEN_GAIN, VALUE_OUT_GAIN, rng)?;
        Ok(Self {
            env_family: family,
            head: arch.head,
            policy,
            log_std: vec![0.0; arch.head.log_std_len()],
            value,
            obs_norm: None,
            reward_norm: None,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            policy_layers: self.policy.layer_sizes().to_vec(),
            value_layers: self.value.layer_sizes().to_vec(),
            hidden_activation: crate::math::Activation::Relu,
            output_activation: crate::math::Activation::Identity,
            head: self.head,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.policy.num_params() + self.log_std.len() + self.value.num_params()
    }

    pub fn all_finite(&self) -> bool {
        self.policy.all_finite() && self.value.all_finite() && self.log_std.iter().all(|x| x.is_finite())
    }

    /// Normalizes a raw observation with the agent's frozen statistics
    /// (identity when it has none).
    pub fn normalize_obs(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match &self.obs_norm {
            Some(n) => n.normalize(raw),
            None => {
                check_dim("observation", self.obs_dim(), raw.len())?;
                Ok(raw.to_vec())
            }
        }
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<PolicyDistribution> {
        let out = self.policy.forward(obs)?;
        Ok(self.head.distribution(&out, &self.log_std))
    }

    pub fn distributions(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<PolicyDistribution>> {
        let out = self.policy.forward_batch(obs)?;
        Ok(out
            .rows()
            .into_iter()
            .map(|r| self.head.distribution(r.as_slice().expect("row-major"), &self.log_std))
            .collect())
    }

    pub fn values(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.value.forward_batch(obs)?.into_raw_vec_and_offset().0)
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.value.forward(obs)?[0])
    }

    /// Checks that `other` can stand in for this agent's architecture.
    pub fn ensure_same_architecture(&self, other: &Architecture) -> Result<()> {
        let mine = self.architecture();
        if &mine != other {
            return Err(Error::Architecture(format!(
                "expected {:?}/{:?}, found {:?}/{:?}",
                mine.policy_layers, mine.head, other.policy_layers, other.head
            )));
        }
        Ok(())
    }

    /// Copies policy and value parameters from an agent with the same
    /// architecture.
    pub fn copy_weights_from(&mut self, other: &Agent) -> Result<()> {
        self.ensure_same_architecture(&other.architecture())?;
        self.policy = other.policy.clone();
        self.value = other.value.clone();
        self.log_std = other.log_std.clone();
        Ok(())
    }
}

/// Stacks row vectors into a batch matrix.
pub fn stack_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).expect("rectangular rows")
}
