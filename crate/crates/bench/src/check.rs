//! Per-episode invariants of a recorded run.

use cmdp_core::meta::{Mode, RunRecord};
use cmdp_core::{LoopFreeCmdp, OccupancyMeasure};
use serde::Serialize;

/// Slack for comparisons between separately accumulated floating sums.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckReport {
    pub episodes: usize,
    pub assertions: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn assert(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.assertions += 1;
        if !ok && self.failures.len() < 100 {
            self.failures.push(msg());
        }
    }
}

/// Checks the loss range, the `Gamma` / `Xi` bookkeeping, the policy floor,
/// the multiplier box and increment bound, the step-size products and the
/// `lambda_t >= eta * V̂_{t-1}` relation (while the upper box face is
/// untouched). The bonus product bound `eta_t B <= 1/(2H)` only holds with
/// the full primal constant, so it is checked in paper mode only.
/// Stored occupancies, when present, are validated as well.
pub fn check_run(mdp: &LoopFreeCmdp, run: &RunRecord) -> CheckReport {
    let mut rep = CheckReport {
        episodes: run.episodes.len(),
        ..Default::default()
    };
    let t_total = run.config.episodes as f64;
    let na = mdp.num_actions() as f64;
    let h = mdp.horizon() as f64;
    let m = mdp.num_constraints();
    let eta = run.dual_step;
    let floor = 1.0 / (t_total * na);
    let step_bound = m as f64 * h * eta;
    let mut prev_xi = None;
    let mut v_hat = vec![0.0; m];
    let mut touched_cap = false;

    for (k, e) in run.episodes.iter().enumerate() {
        let t = e.t;
        rep.assert(e.t == k + 1, || {
            format!("episode index {} at position {k}", e.t)
        });
        rep.assert(e.min_loss >= 0.0 && e.max_loss <= e.xi, || {
            format!(
                "t={t}: loss range [{}, {}] outside [0, {}]",
                e.min_loss, e.max_loss, e.xi
            )
        });
        rep.assert(e.gamma == 1.0 + e.lambda_l1, || {
            format!(
                "t={t}: Gamma {} != 1 + ||lambda||_1 = {}",
                e.gamma,
                1.0 + e.lambda_l1
            )
        });
        match prev_xi {
            None => rep.assert(e.xi == 2.0, || format!("Xi_1 = {}", e.xi)),
            Some(p) => rep.assert(e.xi >= p, || {
                format!("t={t}: Xi decreased from {p} to {}", e.xi)
            }),
        }
        prev_xi = Some(e.xi);
        rep.assert(e.primal.min_policy_prob >= floor, || {
            format!(
                "t={}: policy probability {} below 1/(T|A|) = {floor}",
                t + 1,
                e.primal.min_policy_prob
            )
        });
        rep.assert(
            e.lambda
                .iter()
                .all(|&l| (0.0..=run.lambda_box).contains(&l)),
            || {
                format!(
                    "t={t}: lambda {:?} outside [0, {}]",
                    e.lambda, run.lambda_box
                )
            },
        );
        let next_l1 = run
            .episodes
            .get(k + 1)
            .map(|n| n.lambda_l1)
            .unwrap_or_else(|| run.final_lambda.iter().sum());
        rep.assert(next_l1 - e.lambda_l1 <= step_bound + SUM_TOL, || {
            format!(
                "t={t}: ||lambda||_1 grew by {} > mH eta = {step_bound}",
                next_l1 - e.lambda_l1
            )
        });
        rep.assert(e.primal.max_eta_q_hat <= 0.5, || {
            format!("t={t}: eta_t * Q_hat = {} > 1/2", e.primal.max_eta_q_hat)
        });
        if run.config.mode == Mode::Paper {
            rep.assert(e.primal.max_eta_bonus <= 0.5 / h, || {
                format!("t={t}: eta_t * B = {} > 1/(2H)", e.primal.max_eta_bonus)
            });
        }
        if !touched_cap {
            for i in 0..m {
                let lam = e.lambda[i];
                let bound = eta * v_hat[i];
                rep.assert(lam >= bound - 1e-9 * (1.0 + bound.abs()), || {
                    format!("t={t}: lambda_{i} = {lam} < eta * V_hat = {bound}")
                });
            }
        }
        for i in 0..m {
            v_hat[i] += e.traversed_violation[i];
        }
        touched_cap |= e.lambda.iter().any(|&l| l >= run.lambda_box);
    }
    let last = run.final_lambda.clone();
    rep.assert(
        last.iter().all(|&l| (0.0..=run.lambda_box).contains(&l)),
        || format!("final lambda {last:?} outside [0, {}]", run.lambda_box),
    );
    if let Some(qs) = &run.occupancies {
        for (k, q) in qs.iter().enumerate() {
            let ok = OccupancyMeasure::from_pair_masses(mdp, q)
                .and_then(|q| q.validate(mdp))
                .is_ok();
            rep.assert(ok, || format!("t={}: invalid occupancy", k + 1));
        }
    }
    rep
}
