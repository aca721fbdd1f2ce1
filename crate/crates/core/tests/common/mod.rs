#![allow(dead_code)]

use cmdp_core::generate::{random_cmdp, random_policy};
use cmdp_core::{LoopFreeCmdp, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Instance drawn from a seed: 2 to 4 layers, up to 4 states per layer, up
/// to 3 actions.
pub fn seeded_instance(seed: u64, num_constraints: usize) -> (LoopFreeCmdp, Policy, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.random_range(2..=4);
    let actions = rng.random_range(1..=3);
    let mdp = random_cmdp(&mut rng, layers, 4, actions, num_constraints);
    let policy = random_policy(&mut rng, &mdp);
    (mdp, policy, rng)
}

/// Least-squares slope of `log y` on `log t`.
pub fn log_log_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = ys.iter().map(|y| y.max(1.0).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
