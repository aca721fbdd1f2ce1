//! Epoch-based transition estimation with L1 confidence sets.
//!
//! The confidence set holds every kernel whose row at `(x, a)` lies within
//! `eps(x, a)` in L1 of the empirical row. Estimates and radii are frozen
//! during an epoch; a new epoch starts as soon as the visit count of any
//! pair has doubled since the previous epoch began.

use serde::{Deserialize, Serialize};

use crate::cmdp::{LoopFreeCmdp, Policy, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    num_actions: usize,
    delta: f64,
    log_term: f64,
    epoch: usize,
    counts: Vec<u64>,
    successor_counts: Vec<Vec<u64>>,
    epoch_counts: Vec<u64>,
    empirical: Vec<Vec<f64>>,
    radius: Vec<f64>,
}

impl ConfidenceModel {
    /// Fresh model for a run of `episodes` episodes at confidence `delta`.
    pub fn new(mdp: &LoopFreeCmdp, episodes: usize, delta: f64) -> Self {
        let log_term =
            ((episodes.max(1) * mdp.num_states() * mdp.num_actions()) as f64 / delta).ln();
        let widths: Vec<usize> = (0..mdp.num_pairs())
            .map(|p| mdp.successors(p / mdp.num_actions()).len())
            .collect();
        let mut model = Self {
            num_actions: mdp.num_actions(),
            delta,
            log_term,
            epoch: 0,
            counts: vec![0; widths.len()],
            successor_counts: widths.iter().map(|&w| vec![0; w]).collect(),
            epoch_counts: vec![0; widths.len()],
            empirical: Vec::new(),
            radius: Vec::new(),
        };
        model.refresh();
        model
    }

    /// Model with prescribed empirical rows and radii, frozen at epoch 0.
    pub fn with_estimates(mdp: &LoopFreeCmdp, empirical: Vec<Vec<f64>>, radius: Vec<f64>) -> Self {
        let mut model = Self::new(mdp, 1, 0.5);
        assert_eq!(empirical.len(), mdp.num_pairs());
        assert_eq!(radius.len(), mdp.num_pairs());
        model.empirical = empirical;
        model.radius = radius;
        model
    }

    fn refresh(&mut self) {
        self.empirical = self
            .successor_counts
            .iter()
            .zip(&self.counts)
            .map(|(row, &n)| {
                if n == 0 {
                    vec![1.0 / row.len().max(1) as f64; row.len()]
                } else {
                    row.iter().map(|&c| c as f64 / n as f64).collect()
                }
            })
            .collect();
        self.radius = self
            .successor_counts
            .iter()
            .zip(&self.counts)
            .map(|(row, &n)| (2.0 * row.len() as f64 * self.log_term / n.max(1) as f64).sqrt())
            .collect();
        self.epoch_counts.clone_from(&self.counts);
    }

    /// Records the trajectory; returns `true` when a new epoch started.
    pub fn update(&mut self, mdp: &LoopFreeCmdp, trajectory: &Trajectory) -> bool {
        let mut doubled = false;
        let mut next_states = trajectory
            .steps
            .iter()
            .skip(1)
            .map(|s| s.state)
            .chain(std::iter::once(trajectory.final_state));
        for step in &trajectory.steps {
            let pair = step.state * self.num_actions + step.action;
            let y = next_states.next().expect("one successor per step");
            self.counts[pair] += 1;
            self.successor_counts[pair][mdp.position(y)] += 1;
            if self.counts[pair] >= (2 * self.epoch_counts[pair]).max(1) {
                doubled = true;
            }
        }
        if doubled {
            self.epoch += 1;
            self.refresh();
        }
        doubled
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Cumulative visit count `N(x, a)`.
    pub fn count(&self, pair: usize) -> u64 {
        self.counts[pair]
    }

    /// Count frozen at the start of the current epoch.
    pub fn epoch_count(&self, pair: usize) -> u64 {
        self.epoch_counts[pair]
    }

    pub fn empirical(&self, pair: usize) -> &[f64] {
        &self.empirical[pair]
    }

    pub fn radius(&self, pair: usize) -> f64 {
        self.radius[pair]
    }

    /// Whether every row of `kernel` lies inside the current confidence set.
    pub fn contains(&self, kernel: &[Vec<f64>]) -> bool {
        kernel
            .iter()
            .zip(&self.empirical)
            .zip(&self.radius)
            .all(|((p, pbar), eps)| {
                p.iter().zip(pbar).map(|(a, b)| (a - b).abs()).sum::<f64>() <= *eps
            })
    }

    /// `max_{p in ball(pair)} sum_j p_j v_j`.
    pub fn max_expectation(&self, pair: usize, values: &[f64]) -> f64 {
        let p = extremal_distribution(&self.empirical[pair], self.radius[pair], values);
        p.iter().zip(values).map(|(a, b)| a * b).sum()
    }

    /// `min_{p in ball(pair)} sum_j p_j v_j`, computed as `-max(-v)`.
    pub fn min_expectation(&self, pair: usize, values: &[f64]) -> f64 {
        let neg: Vec<f64> = values.iter().map(|v| -v).collect();
        -self.max_expectation(pair, &neg)
    }

    /// `max_{P in set} q^{P,pi}(x, a)` for every pair.
    pub fn upper_occupancy(&self, mdp: &LoopFreeCmdp, policy: &Policy) -> Vec<f64> {
        self.extremal_occupancy(mdp, policy, true)
    }

    /// `min_{P in set} q^{P,pi}(x, a)` for every pair.
    pub fn lower_occupancy(&self, mdp: &LoopFreeCmdp, policy: &Policy) -> Vec<f64> {
        self.extremal_occupancy(mdp, policy, false)
    }

    // For each target state, a backward pass computes the extremal
    // probability of reaching it from every earlier state; rows are chosen
    // independently since each appears once along any path.
    fn extremal_occupancy(&self, mdp: &LoopFreeCmdp, policy: &Policy, upper: bool) -> Vec<f64> {
        let na = self.num_actions;
        let mut out = vec![0.0; mdp.num_pairs()];
        let mut reach = vec![0.0; mdp.num_states()];
        let mut values = Vec::new();
        for target in mdp.decision_states() {
            let k = mdp.layer_of(target);
            for &y in mdp.layer(k) {
                reach[y] = f64::from(y == target);
            }
            for h in (0..k).rev() {
                for &x in mdp.layer(h) {
                    values.clear();
                    values.extend(mdp.successors(x).iter().map(|&y| reach[y]));
                    let mut v = 0.0;
                    for a in 0..na {
                        let pi = policy.prob(x, a);
                        if pi == 0.0 {
                            continue;
                        }
                        let e = if upper {
                            self.max_expectation(x * na + a, &values)
                        } else {
                            self.min_expectation(x * na + a, &values)
                        };
                        v += pi * e;
                    }
                    reach[x] = v.clamp(0.0, 1.0);
                }
            }
            let r = reach[mdp.initial_state()];
            for a in 0..na {
                out[target * na + a] = r * policy.prob(target, a);
            }
        }
        out
    }
}

/// Greedy L1-ball maximizer: move up to `radius / 2` mass onto the entry
/// with the largest value, taking it from the lowest-valued entries first.
/// Equal values are ordered by index.
pub fn extremal_distribution(center: &[f64], radius: f64, values: &[f64]) -> Vec<f64> {
    let mut p = center.to_vec();
    if p.len() < 2 || radius <= 0.0 {
        return p;
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let best = order[0];
    let mut budget = (radius / 2.0).min(1.0 - p[best]);
    if budget <= 0.0 {
        return p;
    }
    p[best] += budget;
    for &j in order.iter().skip(1).rev() {
        if budget <= 0.0 {
            break;
        }
        // a sub-ulp leftover from the budget arithmetic still empties the entry
        if budget >= p[j] - 4.0 * f64::EPSILON {
            budget -= p[j];
            p[j] = 0.0;
        } else {
            p[j] -= budget;
            budget = 0.0;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{occupancy_from_policy, Step};

    fn fork() -> LoopFreeCmdp {
        LoopFreeCmdp::from_fn(vec![vec![0], vec![1, 2], vec![3]], 2, 0, |x, a, y| {
            match (x, a, y) {
                (0, 0, 1) => 0.3,
                (0, 0, 2) => 0.7,
                (0, 1, 1) => 0.6,
                (0, 1, 2) => 0.4,
                _ => 1.0,
            }
        })
        .unwrap()
    }

    fn traj(path: &[(usize, usize)], last: usize) -> Trajectory {
        Trajectory {
            steps: path
                .iter()
                .map(|&(state, action)| Step {
                    state,
                    action,
                    reward: 0.0,
                    violations: vec![],
                })
                .collect(),
            final_state: last,
        }
    }

    #[test]
    fn first_observation_opens_an_epoch() {
        let mdp = fork();
        let mut model = ConfidenceModel::new(&mdp, 100, 0.1);
        assert_eq!(model.empirical(0), &[0.5, 0.5]);
        let t = traj(&[(0, 0), (2, 1)], 3);
        assert!(model.update(&mdp, &t));
        assert_eq!(model.epoch(), 1);
        assert_eq!(model.count(0), 1);
        assert_eq!(model.count(mdp.pair(2, 1)), 1);
        assert_eq!(model.empirical(0), &[0.0, 1.0]);
        assert!(model.update(&mdp, &t));
        assert_eq!(model.epoch(), 2);
        // 3 < 2 * 2: no new epoch
        assert!(!model.update(&mdp, &t));
        assert_eq!(model.epoch_count(0), 2);
        assert!(model.update(&mdp, &t));
    }

    #[test]
    fn radius_shrinks_with_counts() {
        let mdp = fork();
        let mut model = ConfidenceModel::new(&mdp, 100, 0.1);
        let unvisited = model.radius(0);
        let expected = (2.0 * 2.0 * (100.0f64 * 4.0 * 2.0 / 0.1).ln()).sqrt();
        assert!((unvisited - expected).abs() < 1e-12);
        let t = traj(&[(0, 0), (1, 0)], 3);
        let mut last = unvisited;
        for _ in 0..64 {
            model.update(&mdp, &t);
            assert!(model.radius(0) <= last);
            last = model.radius(0);
        }
        assert!(last < unvisited);
    }

    #[test]
    fn max_expectation_cases() {
        let mdp = fork();
        let model = ConfidenceModel::with_estimates(
            &mdp,
            vec![
                vec![0.5, 0.5],
                vec![0.5, 0.5],
                vec![1.0],
                vec![1.0],
                vec![1.0],
                vec![1.0],
                vec![],
                vec![],
            ],
            vec![0.4, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        );
        assert!((model.max_expectation(0, &[1.0, 0.0]) - 0.7).abs() < 1e-15);
        assert!((model.min_expectation(0, &[1.0, 0.0]) - 0.3).abs() < 1e-15);
        assert_eq!(model.max_expectation(1, &[1.0, 0.0]), 0.5);
        let saturated = extremal_distribution(&[0.2, 0.3, 0.5], 2.0, &[0.0, 3.0, 1.0]);
        assert_eq!(saturated, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn ties_break_by_index() {
        let p = extremal_distribution(&[0.25, 0.25, 0.5], 0.5, &[1.0, 1.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn collapsed_set_gives_plain_occupancy() {
        let mdp = fork();
        let model = ConfidenceModel::with_estimates(
            &mdp,
            mdp.kernel().to_vec(),
            vec![0.0; mdp.num_pairs()],
        );
        let pi = Policy::new(&mdp, vec![0.2, 0.8, 0.5, 0.5, 0.1, 0.9, 0.5, 0.5]).unwrap();
        let exact = occupancy_from_policy(&mdp, &pi).unwrap().pair_masses();
        let up = model.upper_occupancy(&mdp, &pi);
        let lo = model.lower_occupancy(&mdp, &pi);
        for p in 0..mdp.num_pairs() {
            assert!((up[p] - exact[p]).abs() < 1e-15);
            assert!((lo[p] - exact[p]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_path_ignores_radius() {
        let mdp =
            LoopFreeCmdp::from_fn(vec![vec![0], vec![1], vec![2], vec![3]], 2, 0, |_, _, _| {
                1.0
            })
            .unwrap();
        let mut model = ConfidenceModel::new(&mdp, 10, 0.1);
        model.radius.iter_mut().for_each(|r| *r = 1.5);
        let pi = Policy::new(&mdp, vec![0.3, 0.7, 0.6, 0.4, 0.9, 0.1, 0.5, 0.5]).unwrap();
        let up = model.upper_occupancy(&mdp, &pi);
        assert!((up[mdp.pair(2, 1)] - 0.1).abs() < 1e-15);
        assert_eq!(up, model.lower_occupancy(&mdp, &pi));
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let mdp = fork();
        let mut model = ConfidenceModel::new(&mdp, 50, 0.05);
        model.update(&mdp, &traj(&[(0, 1), (1, 0)], 3));
        let text = serde_json::to_string(&model).unwrap();
        let back: ConfidenceModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
    }
}
