//! Random instances and policies for tests and benchmarks.

use rand::Rng;

use crate::cmdp::{LoopFreeCmdp, Policy};

/// Probability vector from normalized exponential draws. With `sparse`, each
/// entry except one survivor is zeroed with probability 0.3.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-12).ln())
        .collect();
    if sparse && n > 1 {
        let keep = rng.random_range(0..n);
        for (i, x) in v.iter_mut().enumerate() {
            if i != keep && rng.random_bool(0.3) {
                *x = 0.0;
            }
        }
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// `num_layers` layers with singleton ends and `1..=max_width` states in
/// between; states are numbered layer by layer.
pub fn random_layers<R: Rng + ?Sized>(
    rng: &mut R,
    num_layers: usize,
    max_width: usize,
) -> Vec<Vec<usize>> {
    let mut next = 0;
    (0..num_layers)
        .map(|h| {
            let w = if h == 0 || h + 1 == num_layers {
                1
            } else {
                rng.random_range(1..=max_width.max(1))
            };
            let layer = (next..next + w).collect();
            next += w;
            layer
        })
        .collect()
}

/// Random layered instance with sparse kernel rows.
pub fn random_cmdp<R: Rng + ?Sized>(
    rng: &mut R,
    num_layers: usize,
    max_width: usize,
    num_actions: usize,
    num_constraints: usize,
) -> LoopFreeCmdp {
    let layers = random_layers(rng, num_layers, max_width);
    let num_states: usize = layers.iter().map(Vec::len).sum();
    let mut kernel = vec![Vec::new(); num_states * num_actions];
    for h in 0..num_layers - 1 {
        for &x in &layers[h] {
            for a in 0..num_actions {
                kernel[x * num_actions + a] = random_simplex(rng, layers[h + 1].len(), true);
            }
        }
    }
    LoopFreeCmdp::new(layers, num_actions, num_constraints, kernel)
        .expect("generated instance is valid")
}

/// Random policy with sparse rows; some states become deterministic.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, mdp: &LoopFreeCmdp) -> Policy {
    let na = mdp.num_actions();
    let mut probs = vec![1.0 / na as f64; mdp.num_pairs()];
    for x in mdp.decision_states() {
        let row = random_simplex(rng, na, true);
        probs[x * na..(x + 1) * na].copy_from_slice(&row);
    }
    Policy::new(mdp, probs).expect("generated policy is valid")
}

pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}
