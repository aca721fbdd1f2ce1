//! Projected online gradient ascent on the Lagrange multipliers over the
//! box `[0, T^{1/4}]^m`.

use serde::{Deserialize, Serialize};

use crate::cmdp::LoopFreeCmdp;

/// `D = 84672 m H^2 |X|^2 |A|`.
pub fn paper_constant(mdp: &LoopFreeCmdp) -> f64 {
    let x = mdp.num_states() as f64;
    let h = mdp.horizon() as f64;
    84672.0 * mdp.num_constraints() as f64 * h * h * x * x * mdp.num_actions() as f64
}

/// `eta = 1 / (D ln(|A| |X|^2 T^2 / delta) sqrt T)`.
pub fn paper_step_size(mdp: &LoopFreeCmdp, episodes: usize, delta: f64) -> f64 {
    let x = mdp.num_states() as f64;
    let t = episodes as f64;
    let log = (mdp.num_actions() as f64 * x * x * t * t / delta).ln();
    1.0 / (paper_constant(mdp) * log * t.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    lambda: Vec<f64>,
    eta: f64,
    cap: f64,
}

impl DualState {
    /// Multipliers start at zero; the box cap is `T^{1/4}`.
    pub fn new(num_constraints: usize, eta: f64, episodes: usize) -> Self {
        Self {
            lambda: vec![0.0; num_constraints],
            eta,
            cap: (episodes as f64).powf(0.25),
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn l1(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `lambda <- clamp(lambda + eta * g, 0, cap)` componentwise, where `g` is
    /// the violation summed along the traversed path.
    pub fn step(&mut self, traversed_violations: &[f64]) {
        debug_assert_eq!(traversed_violations.len(), self.lambda.len());
        for (l, g) in self.lambda.iter_mut().zip(traversed_violations) {
            *l = (*l + self.eta * g).clamp(0.0, self.cap);
        }
    }
}

/// Closed-form interval bound
/// `||lambda_{t1} - lambda||^2 / (2 eta) + (eta / 2) (t2 - t1 + 1) m H^2`.
pub fn interval_regret_bound(
    eta: f64,
    lambda_t1: &[f64],
    comparator: &[f64],
    t1: usize,
    t2: usize,
    horizon: usize,
) -> f64 {
    assert!(t1 <= t2, "empty interval");
    let dist2: f64 = lambda_t1
        .iter()
        .zip(comparator)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let m = lambda_t1.len() as f64;
    let h = horizon as f64;
    dist2 / (2.0 * eta) + 0.5 * eta * (t2 - t1 + 1) as f64 * m * h * h
}

/// Realized `sum_{t in [t1, t2]} (lambda - lambda_t)^T g_t` over 1-based
/// episode indices into `lambdas` / `gradients`.
pub fn interval_regret(
    lambdas: &[Vec<f64>],
    gradients: &[Vec<f64>],
    comparator: &[f64],
    t1: usize,
    t2: usize,
) -> f64 {
    (t1..=t2)
        .map(|t| {
            lambdas[t - 1]
                .iter()
                .zip(&gradients[t - 1])
                .zip(comparator)
                .map(|((l, g), c)| (c - l) * g)
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_arithmetic_and_clamps() {
        let mut d = DualState::new(1, 0.01, 16);
        d.lambda[0] = 0.1;
        d.step(&[2.0]);
        assert!((d.lambda()[0] - 0.12).abs() < 1e-15);

        let mut d = DualState::new(1, 0.01, 16);
        d.step(&[-2.0]);
        assert_eq!(d.lambda(), &[0.0]);

        let mut d = DualState::new(1, 0.5, 16);
        d.lambda[0] = 1.9;
        d.step(&[2.0]);
        assert_eq!(d.lambda(), &[2.0]);
        assert_eq!(d.cap(), 2.0);
    }

    #[test]
    fn zero_gradient_is_identity_inside_the_box() {
        let mut d = DualState::new(3, 0.3, 81);
        d.lambda = vec![0.5, 1.0, 2.9];
        let before = d.clone();
        d.step(&[0.0; 3]);
        assert_eq!(d, before);
    }

    #[test]
    fn bound_plug_ins() {
        let eta = 0.1;
        assert!(
            (interval_regret_bound(eta, &[0.3], &[0.3], 4, 9, 2) - 0.5 * eta * 6.0 * 4.0).abs()
                < 1e-15
        );
        let b = interval_regret_bound(eta, &[0.0], &[0.5], 1, 1, 1);
        assert!((b - (0.25 / (2.0 * eta) + eta / 2.0)).abs() < 1e-15);
    }
}
