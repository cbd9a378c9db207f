//! Scalar forms of the clipped surrogate and the clipped distillation term.

/// `g(ε, A)`: the clipped surrogate bound, `(1+ε)A` for `A >= 0` and
/// `(1-ε)A` otherwise.
pub fn clip_bound(eps: f64, advantage: f64) -> f64 {
    if advantage >= 0.0 {
        (1.0 + eps) * advantage
    } else {
        (1.0 - eps) * advantage
    }
}

/// PPO-clip surrogate `min(ratio·A, g(ε, A))`, a quantity to maximize.
pub fn ppo_clip_loss(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(clip_bound(eps, advantage))
}

/// Whether the unclipped branch is the minimum, i.e. whether the surrogate
/// has a non-zero gradient with respect to the ratio.
pub fn ppo_clip_active(ratio: f64, advantage: f64, eps: f64) -> bool {
    ratio * advantage < clip_bound(eps, advantage)
}

/// Distillation penalty `KL · max(ratio, 1-ε)`. Only the lower side of the
/// ratio is clamped: the KL is non-negative, so the upper branch never binds.
pub fn ppd_distill_term(kl: f64, ratio: f64, eps: f64) -> f64 {
    kl * ratio.max(1.0 - eps)
}

/// Per-sample objective maximized by proximal policy distillation:
/// `L_PPO - λ · KL · max(ratio, 1-ε)`.
pub fn ppd_objective(ratio: f64, advantage: f64, kl: f64, eps: f64, lambda: f64) -> f64 {
    ppo_clip_loss(ratio, advantage, eps) - lambda * ppd_distill_term(kl, ratio, eps)
}
