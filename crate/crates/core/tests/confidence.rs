use cmdp_core::cmdp::{occupancy_from_policy, rollout};
use cmdp_core::generate::{random_cmdp, random_policy, random_simplex as simplex};
use cmdp_core::transition::ConfidenceModel;
use cmdp_core::{ConstraintMatrix, LoopFreeCmdp, RewardVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-3;

/// Two-point distributions `(p, 1 - p)` on a grid inside the L1 ball.
fn ball_grid(center: &[f64], radius: f64) -> Vec<f64> {
    (0..=1000)
        .map(|k| k as f64 * STEP)
        .filter(|p| (p - center[0]).abs() + (1.0 - p - center[1]).abs() <= radius + 1e-12)
        .collect()
}

fn fork(rng: &mut ChaCha8Rng) -> LoopFreeCmdp {
    let rows: Vec<Vec<f64>> = (0..2).map(|_| simplex(rng, 2, false)).collect();
    LoopFreeCmdp::from_fn(vec![vec![0], vec![1, 2], vec![3]], 2, 0, |x, a, y| {
        if x == 0 {
            rows[a][y - 1]
        } else {
            1.0
        }
    })
    .unwrap()
}

fn perturbed_model(mdp: &LoopFreeCmdp, rng: &mut ChaCha8Rng) -> ConfidenceModel {
    let empirical: Vec<Vec<f64>> = (0..mdp.num_pairs())
        .map(|p| simplex(rng, mdp.successors(p / mdp.num_actions()).len(), false))
        .collect();
    let radius = (0..mdp.num_pairs())
        .map(|_| rng.random_range(0.0..0.6))
        .collect();
    ConfidenceModel::with_estimates(mdp, empirical, radius)
}

#[test]
fn max_expectation_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let center = simplex(&mut rng, 2, false);
        let radius = rng.random_range(0.0..2.0);
        let values = [rng.random::<f64>(), rng.random::<f64>()];
        let mdp = LoopFreeCmdp::from_fn(vec![vec![0], vec![1, 2], vec![3]], 1, 0, |x, _, _| {
            if x == 0 {
                0.5
            } else {
                1.0
            }
        })
        .unwrap();
        let empirical = vec![center.clone(), vec![1.0], vec![1.0], vec![]];
        let model = ConfidenceModel::with_estimates(&mdp, empirical, vec![radius, 0.0, 0.0, 0.0]);
        let brute = ball_grid(&center, radius)
            .into_iter()
            .map(|p| p * values[0] + (1.0 - p) * values[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let got = model.max_expectation(0, &values);
        assert!((got - brute).abs() <= 2e-3, "{got} vs grid {brute}");
        assert!(got >= brute - 1e-12);
    }
}

#[test]
fn extremal_occupancies_match_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mdp = fork(&mut rng);
        let model = perturbed_model(&mdp, &mut rng);
        let policy = random_policy(&mut rng, &mdp);
        let upper = model.upper_occupancy(&mdp, &policy);
        let lower = model.lower_occupancy(&mdp, &policy);
        let g0 = ball_grid(model.empirical(0), model.radius(0));
        let g1 = ball_grid(model.empirical(1), model.radius(1));
        for y in [1usize, 2] {
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for &p0 in &g0 {
                for &p1 in &g1 {
                    let into = |p: f64| if y == 1 { p } else { 1.0 - p };
                    let reach = policy.prob(0, 0) * into(p0) + policy.prob(0, 1) * into(p1);
                    hi = hi.max(reach);
                    lo = lo.min(reach);
                }
            }
            for a in 0..2 {
                let pi = policy.prob(y, a);
                let p = mdp.pair(y, a);
                assert!(
                    (upper[p] - hi * pi).abs() <= 2e-3,
                    "upper {} vs {}",
                    upper[p],
                    hi * pi
                );
                assert!(
                    (lower[p] - lo * pi).abs() <= 2e-3,
                    "lower {} vs {}",
                    lower[p],
                    lo * pi
                );
            }
        }
        for a in 0..2 {
            assert_eq!(upper[a], policy.prob(0, a));
            assert_eq!(lower[a], policy.prob(0, a));
        }
    }
}

#[test]
fn true_occupancy_is_sandwiched_while_covered() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for _ in 0..6 {
        let layers = rng.random_range(3..=4);
        let mdp = random_cmdp(&mut rng, layers, 3, 2, 0);
        let mut model = ConfidenceModel::new(&mdp, 500, 0.1);
        let r = RewardVector::zeros(mdp.num_pairs());
        let g = ConstraintMatrix::constant(mdp.num_pairs(), 0, 0.0).unwrap();
        for t in 0..500 {
            let behaviour = random_policy(&mut rng, &mdp);
            model.update(&mdp, &rollout(&mdp, &behaviour, &r, &g, &mut rng));
            if t % 25 != 0 || !model.contains(mdp.kernel()) {
                continue;
            }
            let policy = random_policy(&mut rng, &mdp);
            let q = occupancy_from_policy(&mdp, &policy).unwrap().pair_masses();
            let upper = model.upper_occupancy(&mdp, &policy);
            let lower = model.lower_occupancy(&mdp, &policy);
            for p in 0..mdp.num_pairs() {
                assert!(lower[p] <= q[p] + 1e-12 && q[p] <= upper[p] + 1e-12);
            }
            checked += 1;
        }
    }
    assert!(checked > 50);
}
