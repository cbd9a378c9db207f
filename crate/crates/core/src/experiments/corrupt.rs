use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::eval::{evaluate, fraction_of_teacher, EvalProtocol};
use crate::error::{Error, Result};
use crate::io::AgentCheckpoint;
use crate::seeding::{derive_seed, rng_for, tags};

/// Noise scale used for imperfect teachers.
pub const DEFAULT_SIGMA: f64 = 0.05;

/// Adds i.i.d. `N(0, sigma²)` noise to every policy parameter (network and
/// log-std). The value network and normalizer statistics are left intact.
pub fn corrupt_parameters<R: Rng + ?Sized>(ckpt: &AgentCheckpoint, sigma: f64, rng: &mut R) -> Result<AgentCheckpoint> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut out = ckpt.clone();
    for p in out.agent.policy.params_mut() {
        *p += noise.sample(rng);
    }
    for p in &mut out.agent.log_std {
        *p += noise.sample(rng);
    }
    Ok(out.with_tag("corrupted", "true").with_tag("sigma", sigma))
}

/// A corrupted teacher together with how much of the original score it keeps.
#[derive(Debug, Clone)]
pub struct CorruptedTeacher {
    pub checkpoint: AgentCheckpoint,
    /// Noise stream index that produced it.
    pub attempt: u64,
    pub original_score: f64,
    pub corrupted_score: f64,
    /// Fraction of the original teacher's score retained.
    pub retained: f64,
}

/// Draws corruption noise from successive streams until the corrupted
/// teacher keeps a fraction of the original score inside `band`
/// (inclusive), evaluating both under `protocol`.
pub fn corrupt_within_band(
    ckpt: &AgentCheckpoint,
    sigma: f64,
    seed: u64,
    band: (f64, f64),
    max_attempts: u64,
    protocol: &EvalProtocol,
) -> Result<CorruptedTeacher> {
    let family = ckpt.agent.env_family;
    let original = evaluate(&ckpt.agent, protocol)?.mean;
    for attempt in 0..max_attempts {
        let mut rng = rng_for(derive_seed(seed, tags::CORRUPT), attempt);
        let candidate = corrupt_parameters(ckpt, sigma, &mut rng)?;
        let score = evaluate(&candidate.agent, protocol)?.mean;
        let retained = fraction_of_teacher(score, original, family.score_baseline());
        log::debug!("corruption attempt {attempt}: retained {retained:.3}");
        if retained >= band.0 && retained <= band.1 {
            return Ok(CorruptedTeacher {
                checkpoint: candidate.with_tag("corruption_attempt", attempt),
                attempt,
                original_score: original,
                corrupted_score: score,
                retained,
            });
        }
    }
    Err(Error::Config(format!(
        "no corruption of the {family} teacher within {max_attempts} attempts kept {:.0}-{:.0}% of its score",
        band.0 * 100.0,
        band.1 * 100.0
    )))
}
