//! Regret and violation curves of a recorded run.

use cmdp_core::meta::RunRecord;
use cmdp_core::oracle::{self, OracleSolution};
use cmdp_core::{ConstraintMatrix, LoopFreeCmdp, RewardVector};
use serde::Serialize;

use crate::scenario::ScenarioSource;
use crate::BenchError;

/// Offline comparators for one run.
#[derive(Clone, Debug, Serialize)]
pub struct Baselines {
    /// `OPT_{r̄, Ḡ}`.
    pub opt: f64,
    /// `OPT^W`; `None` when infeasible or too many distinct constraint rows.
    pub weak_opt: Option<f64>,
    pub weak_unavailable: Option<String>,
    pub rho: f64,
    /// `Lambda`, `None` for `rho = 0`.
    pub lambda_cap: Option<f64>,
    pub margin_condition_threshold: f64,
    pub margin_condition_holds: bool,
}

/// Solves the baselines for what `source` emitted during a run of
/// `episodes` episodes. The margin is taken against `Ḡ` for stochastic
/// constraints and against every emitted `G_t` otherwise.
pub fn solve_baselines(
    mdp: &LoopFreeCmdp,
    source: &ScenarioSource,
    episodes: usize,
) -> Result<(Baselines, OracleSolution), BenchError> {
    let (r_bar, g_bar) = source.averages()?;
    let distinct = source
        .log
        .distinct_constraints(mdp.num_pairs(), mdp.num_constraints());
    let margin: Vec<ConstraintMatrix> = if source.scenario().stochastic_constraints() {
        vec![g_bar.clone()]
    } else {
        match &distinct {
            Some(d) => d.clone(),
            None => {
                return Err(BenchError::Config {
                    field: "constraints".into(),
                    detail: "too many distinct adversarial constraint matrices for the margin LP"
                        .into(),
                })
            }
        }
    };
    let solution = oracle::solve_oracle(mdp, &r_bar, &g_bar, &margin, episodes)?;
    let (weak_opt, weak_unavailable) = match &distinct {
        _ if source.log.episodes == 0 => (None, Some("no episodes recorded".to_string())),
        None => (
            None,
            Some("too many distinct constraint matrices".to_string()),
        ),
        Some(d) => weak_value(mdp, &r_bar, d),
    };
    let m = mdp.num_constraints();
    let h = mdp.horizon();
    Ok((
        Baselines {
            opt: solution.opt_value,
            weak_opt,
            weak_unavailable,
            rho: solution.rho,
            lambda_cap: solution
                .lambda_cap
                .is_finite()
                .then_some(solution.lambda_cap),
            margin_condition_threshold: oracle::margin_condition_threshold(episodes, h, m),
            margin_condition_holds: solution.margin_condition_holds,
        },
        solution,
    ))
}

fn weak_value(
    mdp: &LoopFreeCmdp,
    r_bar: &RewardVector,
    gs: &[ConstraintMatrix],
) -> (Option<f64>, Option<String>) {
    match oracle::solve_weak_opt(mdp, r_bar, gs) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Cumulative curves indexed by episode (entry `t - 1` covers `1..=t`).
#[derive(Clone, Debug, Serialize)]
pub struct Metrics {
    pub regret_strong: Vec<f64>,
    pub regret_weak: Option<Vec<f64>>,
    /// `sum_tau [G_tau^T q_tau]_i` per constraint.
    pub violation: Vec<Vec<f64>>,
    /// `V_t = max_i violation[i][t]`.
    pub max_violation: Vec<f64>,
    /// `max(0, V_t)`.
    pub positive_violation: Vec<f64>,
    /// `V̂_{t,i}` from the traversed paths.
    pub realized_violation: Vec<Vec<f64>>,
    pub cumulative_reward: Vec<f64>,
    /// `sum r_t^T q_t / (T OPT)` at the end, when `OPT > 0`.
    pub competitive_ratio: Option<f64>,
    /// `i*`, the constraint with the largest final cumulative violation.
    pub worst_constraint: Option<usize>,
}

pub fn compute_metrics(run: &RunRecord, baselines: &Baselines) -> Metrics {
    let m = run.final_lambda.len();
    let n = run.episodes.len();
    let mut regret_strong = Vec::with_capacity(n);
    let mut regret_weak = baselines.weak_opt.map(|_| Vec::with_capacity(n));
    let mut violation = vec![Vec::with_capacity(n); m];
    let mut realized_violation = vec![Vec::with_capacity(n); m];
    let mut max_violation = Vec::with_capacity(n);
    let mut cumulative_reward = Vec::with_capacity(n);
    let mut reward = 0.0;
    let mut v = vec![0.0; m];
    let mut v_hat = vec![0.0; m];
    for (k, e) in run.episodes.iter().enumerate() {
        let t = (k + 1) as f64;
        reward += e.reward;
        cumulative_reward.push(reward);
        regret_strong.push(t * baselines.opt - reward);
        if let (Some(curve), Some(w)) = (regret_weak.as_mut(), baselines.weak_opt) {
            curve.push(t * w - reward);
        }
        for i in 0..m {
            v[i] += e.violation[i];
            v_hat[i] += e.traversed_violation[i];
            violation[i].push(v[i]);
            realized_violation[i].push(v_hat[i]);
        }
        max_violation.push(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let positive_violation = max_violation.iter().map(|v| v.max(0.0)).collect();
    let competitive_ratio =
        (baselines.opt > 0.0 && n > 0).then(|| reward / (n as f64 * baselines.opt));
    let worst_constraint = (0..m).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a)));
    Metrics {
        regret_strong,
        regret_weak,
        violation,
        max_violation,
        positive_violation,
        realized_violation,
        cumulative_reward,
        competitive_ratio,
        worst_constraint,
    }
}
