mod common;

use cmdp_core::cmdp::{action_values, evaluate, occupancy_from_policy, optimal_value, rollout};
use cmdp_core::dual::{interval_regret, interval_regret_bound, DualState};
use cmdp_core::generate::{random_cmdp, random_policy, random_simplex as simplex, uniform_vec};
use cmdp_core::meta::{CostSource, RunConfig};
use cmdp_core::primal::{estimate_q, ConstantScale, PrimalConfig, PrimalState};
use cmdp_core::transition::ConfidenceModel;
use cmdp_core::{ConstraintMatrix, LoopFreeCmdp, Mode, Policy, RewardVector};
use common::log_log_slope;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn importance_weighted_estimate_is_optimistic_in_expectation() {
    const ROLLOUTS: usize = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mdp = random_cmdp(&mut rng, 4, 2, 2, 0);
    let policy = random_policy(&mut rng, &mdp);
    let loss = uniform_vec(&mut rng, mdp.num_pairs(), 0.0, 1.0);
    // centers within L1 distance 0.2 of the true rows, radius 0.4
    let empirical: Vec<Vec<f64>> = mdp
        .kernel()
        .iter()
        .map(|row| {
            let noise = simplex(&mut rng, row.len(), false);
            row.iter()
                .zip(noise)
                .map(|(p, n)| 0.9 * p + 0.1 * n)
                .collect()
        })
        .collect();
    let model = ConfidenceModel::with_estimates(&mdp, empirical, vec![0.4; mdp.num_pairs()]);
    assert!(model.contains(mdp.kernel()));
    let upper = model.upper_occupancy(&mdp, &policy);
    let q = occupancy_from_policy(&mdp, &policy).unwrap().pair_masses();
    let q_true = action_values(&mdp, &policy, &loss);
    let gamma = 0.05;

    let r = RewardVector::new(loss.clone()).unwrap();
    let g = ConstraintMatrix::constant(mdp.num_pairs(), 0, 0.0).unwrap();
    let n = mdp.num_pairs();
    let (mut sum, mut sq) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..ROLLOUTS {
        let traj = rollout(&mdp, &policy, &r, &g, &mut rng);
        let losses: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let (_, q_hat) = estimate_q(&mdp, &traj, &losses, &upper, gamma);
        for p in 0..n {
            sum[p] += q_hat[p];
            sq[p] += q_hat[p] * q_hat[p];
        }
    }
    let k = ROLLOUTS as f64;
    for x in mdp.decision_states() {
        for a in 0..2 {
            let p = mdp.pair(x, a);
            let mean = sum[p] / k;
            let sd = ((sq[p] / k - mean * mean).max(0.0) / k).sqrt();
            let exact = q[p] * q_true[p] / (upper[p] + gamma);
            assert!(
                (mean - exact).abs() <= 4.0 * sd + 1e-12,
                "pair {p}: {mean} vs {exact}"
            );
            assert!(exact <= q_true[p] + 1e-12);
        }
    }
}

/// Interval regret of the primal learner against a fixed loss sequence: the
/// preferred action flips halfway, with a periodic perturbation on top.
/// Intervals open at or shortly after a flip; inside a settled phase the
/// regret at fixed `T` is dominated by the exploration floor and grows
/// linearly in the span.
#[test]
fn interval_regret_grows_sublinearly() {
    const T: usize = 1 << 13;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mdp = LoopFreeCmdp::from_fn(vec![vec![0], vec![1, 2], vec![3]], 2, 0, |x, _, y| {
        if x == 0 {
            [0.6, 0.4][y - 1]
        } else {
            1.0
        }
    })
    .unwrap();
    let na = mdp.num_actions();
    let wiggle = uniform_vec(&mut rng, mdp.num_pairs(), -0.1, 0.1);
    let loss_at = |t: usize| -> Vec<f64> {
        let s = if (t / 37) % 2 == 0 { 1.0 } else { -1.0 };
        let best = usize::from(t >= T / 2);
        (0..mdp.num_pairs())
            .map(|p| if p % na == best { 0.2 } else { 0.7 } + s * wiggle[p])
            .collect()
    };
    let config = PrimalConfig::new(T, 0.05, ConstantScale::Practical(0.3));
    let mut learner = PrimalState::new(&mdp, &config);
    let g = ConstraintMatrix::constant(mdp.num_pairs(), 0, 0.0).unwrap();
    let mut expected = Vec::with_capacity(T);
    for t in 0..T {
        let loss = loss_at(t);
        let q = occupancy_from_policy(&mdp, learner.policy()).unwrap();
        expected.push(evaluate(&q, &loss).unwrap());
        let r = RewardVector::new(loss).unwrap();
        let traj = rollout(&mdp, learner.policy(), &r, &g, &mut rng);
        let losses: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        learner.update(&mdp, &traj, &losses, 2.0);
    }
    for (t1, end) in [(0, T / 2), (T / 2, T), (T / 2 + T / 16, T)] {
        let ends: Vec<usize> = (0..40)
            .map(|k| {
                let span = (end - t1) as f64;
                t1 + (64.0 * (span / 64.0).powf(k as f64 / 39.0)) as usize
            })
            .collect();
        let regrets: Vec<f64> = ends
            .iter()
            .map(|&t2| {
                let mut total = vec![0.0; mdp.num_pairs()];
                for t in t1..t2 {
                    for (acc, l) in total.iter_mut().zip(loss_at(t)) {
                        *acc -= l;
                    }
                }
                let (best, _) = optimal_value(&mdp, &total);
                expected[t1..t2].iter().sum::<f64>() + best
            })
            .collect();
        let spans: Vec<f64> = ends.iter().map(|&t2| (t2 - t1) as f64).collect();
        let slope = log_log_slope(&spans[20..], &regrets[20..]);
        assert!(
            slope < 0.9,
            "interval from {t1}: slope {slope}, regrets {regrets:?}"
        );
    }
}

proptest! {
    #[test]
    fn projected_ascent_meets_its_interval_bound(
        seed in any::<u64>(),
        eta in 1e-3f64..0.5,
        m in 1usize..4,
        horizon in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 300;
        let mut dual = DualState::new(m, eta, t);
        let h = horizon as f64;
        let (mut lambdas, mut grads) = (Vec::new(), Vec::new());
        for _ in 0..t {
            let g = uniform_vec(&mut rng, m, -h, h);
            lambdas.push(dual.lambda().to_vec());
            dual.step(&g);
            grads.push(g);
        }
        for _ in 0..20 {
            let t1 = rng.random_range(1..=t);
            let t2 = rng.random_range(t1..=t);
            let c = uniform_vec(&mut rng, m, 0.0, dual.cap());
            let realized = interval_regret(&lambdas, &grads, &c, t1, t2);
            let bound = interval_regret_bound(eta, &lambdas[t1 - 1], &c, t1, t2, horizon);
            prop_assert!(realized <= bound, "{realized} > {bound}");
        }
    }
}

struct Fixed(RewardVector, ConstraintMatrix);

impl CostSource for Fixed {
    fn costs(
        &mut self,
        _: usize,
        _: &Policy,
        _: &mut ChaCha8Rng,
    ) -> cmdp_core::Result<(RewardVector, ConstraintMatrix)> {
        Ok((self.0.clone(), self.1.clone()))
    }
}

fn fixed_source(mdp: &LoopFreeCmdp, rng: &mut ChaCha8Rng) -> Fixed {
    let r = uniform_vec(rng, mdp.num_pairs(), 0.0, 1.0);
    let g = uniform_vec(rng, mdp.num_pairs(), -1.0, 1.0);
    Fixed(
        RewardVector::new(r).unwrap(),
        ConstraintMatrix::new(mdp.num_pairs(), 1, g).unwrap(),
    )
}

#[test]
fn runs_repeat_exactly_for_a_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mdp = random_cmdp(&mut rng, 3, 3, 2, 1);
    let mut source = fixed_source(&mdp, &mut rng);
    let config = RunConfig::new(300, Mode::Practical, 12);
    let a = cmdp_core::run(&mdp, &mut source, &config).unwrap();
    let b = cmdp_core::run(&mdp, &mut source, &config).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let other = RunConfig { seed: 13, ..config };
    let c = cmdp_core::run(&mdp, &mut source, &other).unwrap();
    assert_ne!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&c).unwrap()
    );
}

#[test]
fn paper_mode_run_keeps_the_bookkeeping() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mdp = random_cmdp(&mut rng, 4, 2, 2, 1);
    let mut source = fixed_source(&mdp, &mut rng);
    let config = RunConfig::new(200, Mode::Paper, 1);
    let run = cmdp_core::run(&mdp, &mut source, &config).unwrap();
    let mut xi = 2.0;
    for e in &run.episodes {
        assert_eq!(e.gamma, 1.0 + e.lambda_l1);
        assert!(e.xi >= xi);
        xi = e.xi;
        assert!(e.min_loss >= 0.0 && e.max_loss <= e.xi);
        assert!(e
            .lambda
            .iter()
            .all(|&l| (0.0..=run.lambda_box).contains(&l)));
    }
}
