//! Offline occupancy-measure programs: the constrained optimum, the Slater
//! margin and the per-episode (weak) baseline.
//!
//! The oracle knows the true kernel, so kernel consistency
//! `q(x,a,x') = P(x'|x,a) q(x,a)` is substituted directly: the LP variables
//! are the pair masses `q(x,a)` of non-terminal states, subject to layer
//! normalization and flow conservation.

use serde::Serialize;

use crate::cmdp::{ConstraintMatrix, LoopFreeCmdp, OccupancyMeasure, RewardVector};
use crate::error::{Error, Result};
use crate::lp::{DenseSimplex, LinearProgram, LpSolver, Relation};

/// Feasibility / optimality tolerance of the offline programs.
pub const LP_TOL: f64 = 1e-7;

/// Rows at or below this count are solved exactly by [`solve_weak_opt`].
pub const MAX_DISTINCT_ROWS: usize = 4096;

struct Layout {
    // LP variable -> flat pair index
    pairs: Vec<usize>,
}

impl Layout {
    fn new(mdp: &LoopFreeCmdp) -> Self {
        let na = mdp.num_actions();
        let pairs = mdp
            .decision_states()
            .flat_map(|x| (0..na).map(move |a| x * na + a))
            .collect();
        Self { pairs }
    }

    fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Base program over valid occupancies with `extra` trailing variables.
    fn polytope(&self, mdp: &LoopFreeCmdp, objective: Vec<f64>) -> LinearProgram {
        let n = objective.len();
        let na = mdp.num_actions();
        let mut var_of = vec![usize::MAX; mdp.num_pairs()];
        for (v, &p) in self.pairs.iter().enumerate() {
            var_of[p] = v;
        }
        let mut lp = LinearProgram::new(objective);
        let mut row = vec![0.0; n];
        for a in 0..na {
            row[var_of[mdp.pair(mdp.initial_state(), a)]] = 1.0;
        }
        lp.add_row(row, Relation::Eq, 1.0);
        for h in 1..mdp.horizon() {
            for &x in mdp.layer(h) {
                let mut row = vec![0.0; n];
                for a in 0..na {
                    row[var_of[mdp.pair(x, a)]] = 1.0;
                }
                let j = mdp.position(x);
                for &z in mdp.layer(h - 1) {
                    for b in 0..na {
                        row[var_of[mdp.pair(z, b)]] -= mdp.transition(z, b)[j];
                    }
                }
                lp.add_row(row, Relation::Eq, 0.0);
            }
        }
        lp
    }

    fn constraint_rows(&self, g: &ConstraintMatrix, n: usize) -> Vec<Vec<f64>> {
        (0..g.num_constraints())
            .map(|i| {
                let mut row = vec![0.0; n];
                for (v, &p) in self.pairs.iter().enumerate() {
                    row[v] = g.get(p, i);
                }
                row
            })
            .collect()
    }

    fn occupancy(&self, mdp: &LoopFreeCmdp, x: &[f64]) -> Result<OccupancyMeasure> {
        let mut masses = vec![0.0; mdp.num_pairs()];
        for (v, &p) in self.pairs.iter().enumerate() {
            masses[p] = x[v].clamp(0.0, 1.0);
        }
        OccupancyMeasure::from_pair_masses(mdp, &masses)
    }
}

#[derive(Clone, Debug)]
pub struct OptSolution {
    pub value: f64,
    pub q_star: OccupancyMeasure,
}

#[derive(Clone, Debug)]
pub struct RhoSolution {
    /// `max(0, raw)`.
    pub rho: f64,
    pub raw: f64,
    pub q_circ: OccupancyMeasure,
}

fn check_dims(mdp: &LoopFreeCmdp, g: &ConstraintMatrix) -> Result<()> {
    if g.num_pairs() != mdp.num_pairs() && g.num_constraints() > 0 {
        return Err(Error::Structure(format!(
            "constraint matrix covers {} pairs, MDP has {}",
            g.num_pairs(),
            mdp.num_pairs()
        )));
    }
    Ok(())
}

/// `OPT_{r,G}`: maximize `r^T q` over valid occupancies with `G^T q <= 0`.
pub fn solve_opt(
    mdp: &LoopFreeCmdp,
    reward: &RewardVector,
    constraints: &ConstraintMatrix,
) -> Result<OptSolution> {
    solve_opt_with(
        &DenseSimplex::default(),
        mdp,
        reward,
        std::slice::from_ref(constraints),
    )
}

/// Same as [`solve_opt`] with several constraint matrices imposed jointly
/// and an explicit solver.
pub fn solve_opt_with(
    solver: &dyn LpSolver,
    mdp: &LoopFreeCmdp,
    reward: &RewardVector,
    constraints: &[ConstraintMatrix],
) -> Result<OptSolution> {
    if reward.len() != mdp.num_pairs() {
        return Err(Error::Structure(
            "reward vector has the wrong length".into(),
        ));
    }
    for g in constraints {
        check_dims(mdp, g)?;
    }
    let layout = Layout::new(mdp);
    let objective: Vec<f64> = layout.pairs.iter().map(|&p| reward.as_slice()[p]).collect();
    let n = objective.len();
    let mut lp = layout.polytope(mdp, objective);
    for row in distinct_rows(&layout, constraints, n) {
        lp.add_row(row, Relation::Le, 0.0);
    }
    let sol = solver.solve(&lp)?;
    let q_star = layout.occupancy(mdp, &sol.x)?;
    Ok(OptSolution {
        value: sol.objective,
        q_star,
    })
}

fn distinct_rows(layout: &Layout, constraints: &[ConstraintMatrix], n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = constraints
        .iter()
        .flat_map(|g| layout.constraint_rows(g, n))
        .collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.dedup();
    rows
}

/// Slater margin `max_q min_{G, i} -[G^T q]_i` over every supplied matrix.
///
/// The auxiliary margin `s` lies in `[-H, H]`; it enters the program shifted
/// by `H` so that all variables stay nonnegative.
pub fn solve_rho(mdp: &LoopFreeCmdp, constraints: &[ConstraintMatrix]) -> Result<RhoSolution> {
    solve_rho_with(&DenseSimplex::default(), mdp, constraints)
}

pub fn solve_rho_with(
    solver: &dyn LpSolver,
    mdp: &LoopFreeCmdp,
    constraints: &[ConstraintMatrix],
) -> Result<RhoSolution> {
    for g in constraints {
        check_dims(mdp, g)?;
    }
    let h = mdp.horizon() as f64;
    let layout = Layout::new(mdp);
    let n = layout.len() + 1;
    let mut objective = vec![0.0; n];
    objective[n - 1] = 1.0;
    let mut lp = layout.polytope(mdp, objective);
    let rows = distinct_rows(&layout, constraints, n);
    if rows.is_empty() {
        // no constraints: the margin is unbounded above; report the cap H
        let q = layout.occupancy(mdp, &feasible_point(&layout, mdp, solver)?)?;
        return Ok(RhoSolution {
            rho: h,
            raw: h,
            q_circ: q,
        });
    }
    for mut row in rows {
        row[n - 1] = 1.0;
        lp.add_row(row, Relation::Le, h);
    }
    let mut cap = vec![0.0; n];
    cap[n - 1] = 1.0;
    lp.add_row(cap, Relation::Le, 2.0 * h);
    let sol = solver.solve(&lp)?;
    let raw = sol.x[n - 1] - h;
    Ok(RhoSolution {
        rho: raw.max(0.0),
        raw,
        q_circ: layout.occupancy(mdp, &sol.x[..n - 1])?,
    })
}

fn feasible_point(layout: &Layout, mdp: &LoopFreeCmdp, solver: &dyn LpSolver) -> Result<Vec<f64>> {
    let lp = layout.polytope(mdp, vec![0.0; layout.len()]);
    Ok(solver.solve(&lp)?.x)
}

/// `OPT^W`: the best occupancy satisfying every episode's constraints.
/// Duplicate rows are merged; more than [`MAX_DISTINCT_ROWS`] distinct rows
/// is reported as a structural error.
pub fn solve_weak_opt(
    mdp: &LoopFreeCmdp,
    reward: &RewardVector,
    episodes: &[ConstraintMatrix],
) -> Result<f64> {
    let layout = Layout::new(mdp);
    let n = layout.len();
    let rows = distinct_rows(&layout, episodes, n).len();
    if rows > MAX_DISTINCT_ROWS {
        return Err(Error::Structure(format!(
            "{rows} distinct constraint rows exceed the dense solver limit {MAX_DISTINCT_ROWS}"
        )));
    }
    Ok(solve_opt_with(&DenseSimplex::default(), mdp, reward, episodes)?.value)
}

/// Threshold `T^{-1/8} H sqrt(112 m)` on the margin.
pub fn margin_condition_threshold(episodes: usize, horizon: usize, num_constraints: usize) -> f64 {
    (episodes as f64).powf(-0.125) * horizon as f64 * (112.0 * num_constraints as f64).sqrt()
}

/// `112 m H^2 / rho^2`, infinite when `rho == 0`.
pub fn lambda_cap(num_constraints: usize, horizon: usize, rho: f64) -> f64 {
    if rho <= 0.0 {
        f64::INFINITY
    } else {
        112.0 * num_constraints as f64 * (horizon * horizon) as f64 / (rho * rho)
    }
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub opt_value: f64,
    pub q_star: OccupancyMeasure,
    pub rho: f64,
    pub rho_raw: f64,
    pub q_circ: OccupancyMeasure,
    pub lambda_cap: f64,
    pub margin_condition_holds: bool,
}

/// Strong baseline on `(r̄, Ḡ)` plus the margin over `margin_matrices`
/// (`[Ḡ]` for stochastic constraints, the episode matrices otherwise).
pub fn solve_oracle(
    mdp: &LoopFreeCmdp,
    mean_reward: &RewardVector,
    mean_constraints: &ConstraintMatrix,
    margin_matrices: &[ConstraintMatrix],
    episodes: usize,
) -> Result<OracleSolution> {
    let opt = solve_opt(mdp, mean_reward, mean_constraints)?;
    let rho = solve_rho(mdp, margin_matrices)?;
    let m = mdp.num_constraints();
    let h = mdp.horizon();
    Ok(OracleSolution {
        opt_value: opt.value,
        q_star: opt.q_star,
        rho: rho.rho,
        rho_raw: rho.raw,
        q_circ: rho.q_circ,
        lambda_cap: lambda_cap(m, h, rho.rho),
        margin_condition_holds: rho.rho > 0.0
            && rho.rho >= margin_condition_threshold(episodes, h, m),
    })
}

/// JSON export of an [`OracleSolution`]; an infinite cap is written as `null`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleExport {
    pub opt_value: f64,
    pub rho: f64,
    pub rho_raw: f64,
    pub lambda_cap: Option<f64>,
    pub margin_condition_holds: bool,
    pub q_star_pairs: Vec<f64>,
    pub q_star_edges: Vec<f64>,
    pub q_circ_pairs: Vec<f64>,
    pub q_circ_edges: Vec<f64>,
}

impl From<&OracleSolution> for OracleExport {
    fn from(s: &OracleSolution) -> Self {
        Self {
            opt_value: s.opt_value,
            rho: s.rho,
            rho_raw: s.rho_raw,
            lambda_cap: s.lambda_cap.is_finite().then_some(s.lambda_cap),
            margin_condition_holds: s.margin_condition_holds,
            q_star_pairs: s.q_star.pair_masses(),
            q_star_edges: s.q_star.flatten(),
            q_circ_pairs: s.q_circ.pair_masses(),
            q_circ_edges: s.q_circ.flatten(),
        }
    }
}
