//! Small dense linear programs.
//!
//! Problems are stated as `max c^T x` subject to row constraints and
//! `x >= 0`. [`DenseSimplex`] solves them with a two-phase tableau method
//! using Bland's rule, so pivoting is deterministic and cycling cannot occur.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Largest violation of any row or sign constraint at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Anything that can maximize a [`LinearProgram`].
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    /// Feasibility tolerance reported back to callers.
    pub tolerance: f64,
    pub max_pivots: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_pivots: 200_000,
        }
    }
}

// pivot and reduced-cost threshold
const EPS: f64 = 1e-10;

struct Tableau {
    width: usize, // columns including rhs
    cells: Vec<f64>,
    rows: usize,
    basis: Vec<usize>,
    // objective row: reduced costs d_j (entering when d_j > 0), rhs slot = -value
    obj: Vec<f64>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        for v in &mut self.cells[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.cells[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f != 0.0 {
                for (v, pv) in self.cells[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.cells[i * w + c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let w = self.width;
        self.obj = costs.to_vec();
        self.obj.resize(w, 0.0);
        for r in 0..self.rows {
            let cb = costs.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..w {
                    self.obj[c] -= cb * self.cells[r * w + c];
                }
            }
        }
    }

    /// Runs Bland's rule over columns `0..allowed`.
    fn optimize(&mut self, allowed: usize, budget: &mut usize, limit: usize) -> Result<()> {
        loop {
            let Some(c) = (0..allowed).find(|&c| self.obj[c] > EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - EPS
                                || (ratio <= bratio + EPS && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(Error::Unbounded);
            };
            *budget += 1;
            if *budget > limit {
                return Err(Error::PivotLimit(limit));
            }
            self.pivot(r, c);
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        let n = lp.num_vars();
        for row in &lp.rows {
            if row.coeffs.len() != n {
                return Err(Error::Structure("LP row has the wrong width".into()));
            }
        }
        // Normalize to nonnegative right-hand sides.
        let rows: Vec<Row> = lp
            .rows
            .iter()
            .map(|row| {
                if row.rhs < 0.0 {
                    Row {
                        coeffs: row.coeffs.iter().map(|v| -v).collect(),
                        relation: match row.relation {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -row.rhs,
                    }
                } else {
                    row.clone()
                }
            })
            .collect();

        let num_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let num_art = rows.iter().filter(|r| r.relation != Relation::Le).count();
        let art_start = n + num_slack;
        let width = art_start + num_art + 1;
        let m = rows.len();
        let mut tab = Tableau {
            width,
            cells: vec![0.0; m * width],
            rows: m,
            basis: vec![0; m],
            obj: vec![0.0; width],
        };
        let (mut s, mut a) = (n, art_start);
        for (r, row) in rows.iter().enumerate() {
            tab.cells[r * width..r * width + n].copy_from_slice(&row.coeffs);
            tab.cells[r * width + width - 1] = row.rhs;
            match row.relation {
                Relation::Le => {
                    tab.cells[r * width + s] = 1.0;
                    tab.basis[r] = s;
                    s += 1;
                }
                Relation::Ge => {
                    tab.cells[r * width + s] = -1.0;
                    s += 1;
                    tab.cells[r * width + a] = 1.0;
                    tab.basis[r] = a;
                    a += 1;
                }
                Relation::Eq => {
                    tab.cells[r * width + a] = 1.0;
                    tab.basis[r] = a;
                    a += 1;
                }
            }
        }

        let mut budget = 0;
        if num_art > 0 {
            let mut phase1 = vec![0.0; width - 1];
            for c in phase1.iter_mut().skip(art_start) {
                *c = -1.0;
            }
            tab.set_objective(&phase1);
            tab.optimize(width - 1, &mut budget, self.max_pivots)?;
            let infeasibility: f64 = (0..m)
                .filter(|&r| tab.basis[r] >= art_start)
                .map(|r| tab.rhs(r))
                .sum();
            if infeasibility > self.tolerance {
                return Err(Error::Infeasible);
            }
            // Drive remaining (zero-level) artificials out of the basis.
            let mut r = 0;
            while r < tab.rows {
                if tab.basis[r] >= art_start {
                    if let Some(c) = (0..art_start).find(|&c| tab.at(r, c).abs() > 1e-9) {
                        tab.pivot(r, c);
                    } else {
                        // redundant row
                        let w = tab.width;
                        tab.cells.drain(r * w..(r + 1) * w);
                        tab.basis.remove(r);
                        tab.rows -= 1;
                        continue;
                    }
                }
                r += 1;
            }
            // Zero artificial columns so they can never re-enter.
            for r in 0..tab.rows {
                for c in art_start..width - 1 {
                    tab.cells[r * width + c] = 0.0;
                }
            }
        }

        let mut costs = lp.objective.clone();
        costs.resize(width - 1, 0.0);
        tab.set_objective(&costs);
        tab.optimize(art_start, &mut budget, self.max_pivots)?;

        let mut x = vec![0.0; n];
        for r in 0..tab.rows {
            if tab.basis[r] < n {
                x[tab.basis[r]] = tab.rhs(r).max(0.0);
            }
        }
        if lp.max_violation(&x) > self.tolerance {
            return Err(Error::Infeasible);
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective })
    }
}
