/// Generalized advantage estimates for one environment's contiguous steps.
///
/// `dones[t]` marks an episode ending at step `t` (after `rewards[t]`), which
/// cuts both the bootstrap and the recursion; `last_value` bootstraps the
/// step after the final one.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    debug_assert!(values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 == n { last_value } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        next_adv = delta + gamma * gae_lambda * not_done * next_adv;
        adv[t] = next_adv;
    }
    adv
}
