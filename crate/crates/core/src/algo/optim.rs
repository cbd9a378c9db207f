use super::objective::AgentGrads;
use crate::agent::Agent;
use crate::error::{Error, Result};
use crate::math::AdamState;

/// One Adam state per parameter block of an [`Agent`], stepped in lockstep,
/// with optional global gradient-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOptimizer {
    policy: AdamState,
    log_std: AdamState,
    value: AdamState,
    max_grad_norm: Option<f64>,
}

impl AgentOptimizer {
    pub fn new(agent: &Agent, learning_rate: f64, max_grad_norm: Option<f64>) -> Self {
        Self {
            policy: AdamState::new(agent.policy.num_params(), learning_rate),
            log_std: AdamState::new(agent.log_std.len(), learning_rate),
            value: AdamState::new(agent.value.num_params(), learning_rate),
            max_grad_norm,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.policy.step_count()
    }

    /// Clips `grads` to the global norm limit and applies one Adam step.
    /// Returns the pre-clip gradient norm.
    pub fn step(&mut self, agent: &mut Agent, mut grads: AgentGrads) -> Result<f64> {
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(Error::Divergence(format!("gradient norm {norm}")));
        }
        if let Some(max) = self.max_grad_norm {
            let coef = max / (norm + 1e-6);
            if coef < 1.0 {
                grads.scale(coef);
            }
        }
        self.policy.step(agent.policy.params_mut(), grads.policy.as_slice())?;
        self.log_std.step(&mut agent.log_std, &grads.log_std)?;
        self.value.step(agent.value.params_mut(), grads.value.as_slice())?;
        if !agent.all_finite() {
            return Err(Error::Divergence("non-finite parameter after optimizer step".into()));
        }
        Ok(norm)
    }
}
