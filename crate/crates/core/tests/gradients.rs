mod common;

use common::{gradient_check, LossTerm};
use ppd::seeding::rng_for;

const INSTANCES: usize = 100;
const TOLERANCE: f64 = 1e-4;

fn check(term: LossTerm, seed: u64) {
    let worst = gradient_check(term, INSTANCES, &mut rng_for(seed, 0));
    assert!(worst < TOLERANCE, "{term:?}: worst relative error {worst:e}");
}

#[test]
fn ppo_clip_gradient() {
    check(LossTerm::PpoClip, 11);
}

#[test]
fn value_regression_gradient() {
    check(LossTerm::Value, 12);
}

#[test]
fn entropy_gradient() {
    check(LossTerm::Entropy, 13);
}

#[test]
fn kl_gradient() {
    check(LossTerm::Kl, 14);
}

#[test]
fn clipped_kl_gradient() {
    check(LossTerm::ClippedKl, 15);
}

#[test]
fn combined_objective_gradient() {
    check(LossTerm::Combined, 16);
}
