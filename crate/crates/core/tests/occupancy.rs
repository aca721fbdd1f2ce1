mod common;

use cmdp_core::cmdp::{
    action_values, evaluate, occupancy_from_policy, policy_from_occupancy, rollout,
};
use cmdp_core::generate::uniform_vec;
use cmdp_core::{ConstraintMatrix, Error, OccupancyMeasure, RewardVector};
use common::seeded_instance;
use proptest::prelude::*;

proptest! {
    #[test]
    fn forward_pass_is_a_valid_occupancy(seed in any::<u64>()) {
        let (mdp, policy, _) = seeded_instance(seed, 0);
        let q = occupancy_from_policy(&mdp, &policy).unwrap();
        q.validate(&mdp).unwrap();
        prop_assert!(q.kernel_residual(&mdp) <= 1e-12);
    }

    #[test]
    fn evaluate_matches_backward_induction(seed in any::<u64>()) {
        let (mdp, policy, mut rng) = seeded_instance(seed, 0);
        let f = uniform_vec(&mut rng, mdp.num_pairs(), -1.0, 1.0);
        let q = occupancy_from_policy(&mdp, &policy).unwrap();
        let qv = action_values(&mdp, &policy, &f);
        let x0 = mdp.initial_state();
        let v0: f64 = (0..mdp.num_actions()).map(|a| policy.prob(x0, a) * qv[mdp.pair(x0, a)]).sum();
        prop_assert!((evaluate(&q, &f).unwrap() - v0).abs() <= 1e-12);
    }

    #[test]
    fn policy_and_kernel_are_recovered_where_mass_lives(seed in any::<u64>()) {
        let (mdp, policy, _) = seeded_instance(seed, 0);
        let q = occupancy_from_policy(&mdp, &policy).unwrap();
        let (pi, kernel) = policy_from_occupancy(&mdp, &q).unwrap();
        let states = q.state_masses(&mdp);
        for x in mdp.decision_states() {
            if states[x] < 1e-6 {
                continue;
            }
            for a in 0..mdp.num_actions() {
                let p = mdp.pair(x, a);
                prop_assert!((pi.prob(x, a) - policy.prob(x, a)).abs() <= 1e-9);
                if q.pair_mass(p) > 1e-6 {
                    for (k, t) in kernel[p].iter().zip(mdp.transition(x, a)) {
                        prop_assert!((k - t).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn perturbed_mass_fails_validation(seed in any::<u64>(), scale in 1.05f64..2.0) {
        let (mdp, policy, _) = seeded_instance(seed, 0);
        let q = occupancy_from_policy(&mdp, &policy).unwrap();
        let masses = q.pair_masses();
        let target = (0..mdp.num_pairs()).find(|&p| masses[p] > 0.01 && masses[p] * scale <= 1.0);
        prop_assume!(target.is_some());
        let target = target.unwrap();
        let edges: Vec<Vec<f64>> = (0..mdp.num_pairs())
            .map(|p| {
                let s = if p == target { scale } else { 1.0 };
                q.edges(p).iter().map(|v| v * s).collect()
            })
            .collect();
        let bad = OccupancyMeasure::from_edges(&mdp, edges);
        let err = bad.and_then(|b| b.validate(&mdp)).unwrap_err();
        let is_condition = matches!(err, Error::InvalidOccupancy { condition: "(i)" | "(ii)", .. });
        prop_assert!(is_condition, "{err}");
    }
}

#[test]
fn episode_reward_means_match_evaluate() {
    const ROLLOUTS: usize = 100_000;
    for seed in 0..5 {
        let (mdp, policy, mut rng) = seeded_instance(1000 + seed, 0);
        let r = RewardVector::new(uniform_vec(&mut rng, mdp.num_pairs(), 0.0, 1.0)).unwrap();
        let g = ConstraintMatrix::constant(mdp.num_pairs(), 0, 0.0).unwrap();
        let q = occupancy_from_policy(&mdp, &policy).unwrap();
        let expected = evaluate(&q, r.as_slice()).unwrap();
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..ROLLOUTS {
            let v = rollout(&mdp, &policy, &r, &g, &mut rng).realized_reward();
            sum += v;
            sq += v * v;
        }
        let n = ROLLOUTS as f64;
        let mean = sum / n;
        let sd = ((sq / n - mean * mean).max(0.0) / n).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * sd + 1e-12,
            "seed {seed}: MC mean {mean} vs {expected} (sd {sd})"
        );
    }
}
