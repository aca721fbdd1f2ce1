//! Loop-free episodic CMDPs, policies and occupancy measures.
//!
//! States carry a global index and a layer id. Every quantity defined over
//! state-action pairs (rewards, constraints, policies, marginal occupancies)
//! uses the flat pair index `x * num_actions + a`. Pairs at the terminal
//! state exist in that index space but are never played.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for sums supplied as input data.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Tolerance for sums of derived quantities.
pub const DERIVED_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LoopFreeCmdp {
    layers: Vec<Vec<usize>>,
    layer_of: Vec<usize>,
    position: Vec<usize>,
    num_actions: usize,
    num_constraints: usize,
    // kernel[pair][j] = P(layers[h+1][j] | x, a); empty for terminal pairs
    kernel: Vec<Vec<f64>>,
}

impl LoopFreeCmdp {
    /// `kernel` has one row per pair, each row a distribution over the next
    /// layer in layer order. Rows of terminal pairs must be empty.
    pub fn new(
        layers: Vec<Vec<usize>>,
        num_actions: usize,
        num_constraints: usize,
        kernel: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Structure("need at least two layers".into()));
        }
        if layers[0].len() != 1 || layers[layers.len() - 1].len() != 1 {
            return Err(Error::Structure(
                "first and last layers must be singletons".into(),
            ));
        }
        if num_actions == 0 {
            return Err(Error::Structure("need at least one action".into()));
        }
        let num_states: usize = layers.iter().map(Vec::len).sum();
        let mut layer_of = vec![usize::MAX; num_states];
        let mut position = vec![usize::MAX; num_states];
        for (h, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::Structure(format!("layer {h} is empty")));
            }
            for (j, &x) in layer.iter().enumerate() {
                if x >= num_states {
                    return Err(Error::Structure(format!(
                        "state id {x} out of range (states must be numbered 0..{num_states})"
                    )));
                }
                if layer_of[x] != usize::MAX {
                    return Err(Error::Structure(format!("state {x} appears twice")));
                }
                layer_of[x] = h;
                position[x] = j;
            }
        }
        if kernel.len() != num_states * num_actions {
            return Err(Error::Structure(format!(
                "kernel has {} rows, expected {}",
                kernel.len(),
                num_states * num_actions
            )));
        }
        let horizon = layers.len() - 1;
        for (pair, row) in kernel.iter().enumerate() {
            let x = pair / num_actions;
            let h = layer_of[x];
            if h == horizon {
                if !row.is_empty() {
                    return Err(Error::Structure(format!(
                        "terminal state {x} has outgoing transitions"
                    )));
                }
                continue;
            }
            if row.len() != layers[h + 1].len() {
                return Err(Error::Structure(format!(
                    "kernel row for pair ({x},{}) has {} entries, next layer has {}",
                    pair % num_actions,
                    row.len(),
                    layers[h + 1].len()
                )));
            }
            if let Some(&p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(Error::OutOfRange {
                    field: "kernel",
                    index: pair,
                    value: p,
                    range: "[0, 1]",
                });
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STRUCTURE_TOL {
                return Err(Error::Structure(format!(
                    "kernel row for pair ({x},{}) sums to {total}",
                    pair % num_actions
                )));
            }
        }
        Ok(Self {
            layers,
            layer_of,
            position,
            num_actions,
            num_constraints,
            kernel,
        })
    }

    /// Builds the kernel from `prob(x, a, x')` evaluated on every layer edge.
    pub fn from_fn(
        layers: Vec<Vec<usize>>,
        num_actions: usize,
        num_constraints: usize,
        mut prob: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let num_states: usize = layers.iter().map(Vec::len).sum();
        let mut kernel = vec![Vec::new(); num_states * num_actions];
        for h in 0..layers.len().saturating_sub(1) {
            for &x in &layers[h] {
                for a in 0..num_actions {
                    if x < num_states {
                        kernel[x * num_actions + a] =
                            layers[h + 1].iter().map(|&y| prob(x, a, y)).collect();
                    }
                }
            }
        }
        Self::new(layers, num_actions, num_constraints, kernel)
    }

    pub fn num_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states() * self.num_actions
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    /// Number of transitions per episode.
    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn layer(&self, h: usize) -> &[usize] {
        &self.layers[h]
    }

    pub fn layer_of(&self, x: usize) -> usize {
        self.layer_of[x]
    }

    /// Index of `x` inside its own layer.
    pub fn position(&self, x: usize) -> usize {
        self.position[x]
    }

    pub fn initial_state(&self) -> usize {
        self.layers[0][0]
    }

    pub fn terminal_state(&self) -> usize {
        self.layers[self.horizon()][0]
    }

    pub fn is_terminal(&self, x: usize) -> bool {
        self.layer_of[x] == self.horizon()
    }

    pub fn pair(&self, x: usize, a: usize) -> usize {
        x * self.num_actions + a
    }

    /// States reachable in one step from `x`, in the order used by kernel rows.
    pub fn successors(&self, x: usize) -> &[usize] {
        let h = self.layer_of[x];
        if h == self.horizon() {
            &[]
        } else {
            &self.layers[h + 1]
        }
    }

    pub fn transition(&self, x: usize, a: usize) -> &[f64] {
        &self.kernel[self.pair(x, a)]
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    /// Non-terminal states in layer order.
    pub fn decision_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers[..self.horizon()].iter().flatten().copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CmdpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CmdpDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk form of a [`LoopFreeCmdp`].
///
/// ```json
/// {
///   "layers": [[0], [1, 2], [3]],
///   "actions": 2,
///   "constraints": 1,
///   "kernel": { "0": { "0": { "1": 0.5, "2": 0.5 }, "1": { "1": 1.0 } }, ... }
/// }
/// ```
///
/// `kernel[x][a][x']` holds `P(x'|x,a)`; absent successors have probability
/// zero. Floats are written in shortest round-trip form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmdpDocument {
    pub layers: Vec<Vec<usize>>,
    pub actions: usize,
    pub constraints: usize,
    pub kernel: BTreeMap<usize, BTreeMap<usize, BTreeMap<usize, f64>>>,
}

impl From<&LoopFreeCmdp> for CmdpDocument {
    fn from(mdp: &LoopFreeCmdp) -> Self {
        let mut kernel = BTreeMap::new();
        for x in mdp.decision_states() {
            let mut by_action = BTreeMap::new();
            for a in 0..mdp.num_actions {
                let row: BTreeMap<usize, f64> = mdp
                    .successors(x)
                    .iter()
                    .zip(mdp.transition(x, a))
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(&y, &p)| (y, p))
                    .collect();
                by_action.insert(a, row);
            }
            kernel.insert(x, by_action);
        }
        Self {
            layers: mdp.layers.clone(),
            actions: mdp.num_actions,
            constraints: mdp.num_constraints,
            kernel,
        }
    }
}

impl TryFrom<CmdpDocument> for LoopFreeCmdp {
    type Error = Error;

    fn try_from(doc: CmdpDocument) -> Result<Self> {
        let num_states: usize = doc.layers.iter().map(Vec::len).sum();
        for (&x, by_action) in &doc.kernel {
            if x >= num_states {
                return Err(Error::Structure(format!("kernel: unknown state {x}")));
            }
            for (&a, row) in by_action {
                if a >= doc.actions {
                    return Err(Error::Structure(format!(
                        "kernel: unknown action {a} at state {x}"
                    )));
                }
                for &y in row.keys() {
                    if y >= num_states {
                        return Err(Error::Structure(format!("kernel: unknown successor {y}")));
                    }
                }
            }
        }
        // Reject successors outside the next layer instead of dropping them.
        let mut layer_of = vec![usize::MAX; num_states];
        for (h, layer) in doc.layers.iter().enumerate() {
            for &x in layer {
                if x < num_states {
                    layer_of[x] = h;
                }
            }
        }
        for (&x, by_action) in &doc.kernel {
            for (&a, row) in by_action {
                for (&y, &p) in row {
                    if p != 0.0 && layer_of[y] != layer_of[x].wrapping_add(1) {
                        return Err(Error::Structure(format!(
                            "kernel: transition ({x},{a}) -> {y} skips a layer"
                        )));
                    }
                }
            }
        }
        let kernel = &doc.kernel;
        LoopFreeCmdp::from_fn(
            doc.layers.clone(),
            doc.actions,
            doc.constraints,
            |x, a, y| {
                kernel
                    .get(&x)
                    .and_then(|m| m.get(&a))
                    .and_then(|m| m.get(&y))
                    .copied()
                    .unwrap_or(0.0)
            },
        )
    }
}

/// A stationary stochastic policy over the flat pair index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(mdp: &LoopFreeCmdp) -> Self {
        let p = 1.0 / mdp.num_actions as f64;
        Self {
            num_actions: mdp.num_actions,
            probs: vec![p; mdp.num_pairs()],
        }
    }

    /// Validates `probs` (one entry per pair) on every non-terminal state.
    /// Terminal entries are replaced by the uniform distribution.
    pub fn new(mdp: &LoopFreeCmdp, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != mdp.num_pairs() {
            return Err(Error::Structure(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                mdp.num_pairs()
            )));
        }
        let na = mdp.num_actions;
        for x in 0..mdp.num_states() {
            let row = &mut probs[x * na..(x + 1) * na];
            if mdp.is_terminal(x) {
                row.fill(1.0 / na as f64);
                continue;
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidPolicy(format!(
                    "negative probability at state {x}"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STRUCTURE_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "probabilities at state {x} sum to {total}"
                )));
            }
        }
        Ok(Self {
            num_actions: na,
            probs,
        })
    }

    /// Deterministic policy playing `choice[x]` at every state.
    pub fn deterministic(mdp: &LoopFreeCmdp, choice: &[usize]) -> Result<Self> {
        let na = mdp.num_actions;
        let mut probs = vec![0.0; mdp.num_pairs()];
        for x in 0..mdp.num_states() {
            let a = *choice
                .get(x)
                .ok_or_else(|| Error::Structure("choice vector too short".into()))?;
            if a >= na {
                return Err(Error::InvalidPolicy(format!("action {a} at state {x}")));
            }
            probs[x * na + a] = 1.0;
        }
        Self::new(mdp, probs)
    }

    /// Used by the learner, whose rows are normalized by construction.
    pub(crate) fn from_raw(num_actions: usize, probs: Vec<f64>) -> Self {
        Self { num_actions, probs }
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.num_actions + a]
    }

    pub fn action_probs(&self, x: usize) -> &[f64] {
        &self.probs[x * self.num_actions..(x + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn check_shape(&self, mdp: &LoopFreeCmdp) -> Result<()> {
        if self.num_actions != mdp.num_actions || self.probs.len() != mdp.num_pairs() {
            return Err(Error::Structure(
                "policy shape does not match the MDP".into(),
            ));
        }
        Ok(())
    }
}

/// `q(x, a, x')` for every layer edge; marginals are derived on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    num_actions: usize,
    q3: Vec<Vec<f64>>,
}

impl OccupancyMeasure {
    /// Wraps raw edge masses. Shape is checked; validity is not (see
    /// [`OccupancyMeasure::validate`]).
    pub fn from_edges(mdp: &LoopFreeCmdp, q3: Vec<Vec<f64>>) -> Result<Self> {
        if q3.len() != mdp.num_pairs() {
            return Err(Error::Structure(format!(
                "occupancy has {} rows, expected {}",
                q3.len(),
                mdp.num_pairs()
            )));
        }
        for (pair, row) in q3.iter().enumerate() {
            let expected = mdp.successors(pair / mdp.num_actions).len();
            if row.len() != expected {
                return Err(Error::Structure(format!(
                    "occupancy row {pair} has {} entries, expected {expected}",
                    row.len()
                )));
            }
        }
        Ok(Self {
            num_actions: mdp.num_actions,
            q3,
        })
    }

    /// Spreads pair masses `q(x, a)` over successors with the true kernel.
    pub fn from_pair_masses(mdp: &LoopFreeCmdp, masses: &[f64]) -> Result<Self> {
        if masses.len() != mdp.num_pairs() {
            return Err(Error::Structure(
                "pair mass vector has the wrong length".into(),
            ));
        }
        let q3 = masses
            .iter()
            .zip(&mdp.kernel)
            .map(|(&m, row)| row.iter().map(|p| p * m).collect())
            .collect();
        Ok(Self {
            num_actions: mdp.num_actions,
            q3,
        })
    }

    pub fn edges(&self, pair: usize) -> &[f64] {
        &self.q3[pair]
    }

    pub fn pair_mass(&self, pair: usize) -> f64 {
        self.q3[pair].iter().sum()
    }

    /// `q(x, a)` over the flat pair index (zero at the terminal state).
    pub fn pair_masses(&self) -> Vec<f64> {
        self.q3.iter().map(|row| row.iter().sum()).collect()
    }

    /// `q(x)`; the terminal state reports its inflow.
    pub fn state_masses(&self, mdp: &LoopFreeCmdp) -> Vec<f64> {
        let pairs = self.pair_masses();
        let mut out: Vec<f64> = pairs
            .chunks(self.num_actions)
            .map(|c| c.iter().sum())
            .collect();
        let terminal = mdp.terminal_state();
        out[terminal] = mdp
            .layer(mdp.horizon() - 1)
            .iter()
            .flat_map(|&x| (0..self.num_actions).map(move |a| x * self.num_actions + a))
            .map(|p| self.pair_mass(p))
            .sum();
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.q3.iter().flatten().copied().collect()
    }

    /// Checks entry ranges, layer normalization (i) and flow conservation (ii).
    pub fn validate(&self, mdp: &LoopFreeCmdp) -> Result<()> {
        if self.q3.len() != mdp.num_pairs() || self.num_actions != mdp.num_actions {
            return Err(Error::Structure(
                "occupancy shape does not match the MDP".into(),
            ));
        }
        let na = self.num_actions;
        for (pair, row) in self.q3.iter().enumerate() {
            if row.len() != mdp.successors(pair / na).len() {
                return Err(Error::Structure(format!(
                    "occupancy row {pair} has wrong length"
                )));
            }
            for &v in row {
                if !v.is_finite() || v < -DERIVED_TOL || v > 1.0 + DERIVED_TOL {
                    return Err(Error::InvalidOccupancy {
                        condition: "range",
                        detail: format!("entry {v} at pair {pair}"),
                    });
                }
            }
        }
        for h in 0..mdp.horizon() {
            let total: f64 = mdp
                .layer(h)
                .iter()
                .flat_map(|&x| (0..na).map(move |a| x * na + a))
                .map(|p| self.pair_mass(p))
                .sum();
            if (total - 1.0).abs() > DERIVED_TOL {
                return Err(Error::InvalidOccupancy {
                    condition: "(i)",
                    detail: format!("layer {h} carries mass {total}"),
                });
            }
        }
        let mut inflow = vec![0.0; mdp.num_states()];
        for x in mdp.decision_states() {
            for a in 0..na {
                for (&y, &v) in mdp.successors(x).iter().zip(&self.q3[x * na + a]) {
                    inflow[y] += v;
                }
            }
        }
        for h in 1..mdp.horizon() {
            for &x in mdp.layer(h) {
                let out: f64 = (0..na).map(|a| self.pair_mass(x * na + a)).sum();
                if (out - inflow[x]).abs() > DERIVED_TOL {
                    return Err(Error::InvalidOccupancy {
                        condition: "(ii)",
                        detail: format!("state {x}: inflow {} vs outflow {out}", inflow[x]),
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest deviation of `q(x,a,x')` from `P(x'|x,a) q(x,a)`.
    pub fn kernel_residual(&self, mdp: &LoopFreeCmdp) -> f64 {
        self.q3
            .iter()
            .zip(mdp.kernel())
            .map(|(row, p)| {
                let m: f64 = row.iter().sum();
                row.iter()
                    .zip(p)
                    .map(|(v, p)| (v - p * m).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Rewards `r(x, a)` in `[0, 1]` over the flat pair index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_range("reward", &values, 0.0, 1.0, "[0, 1]")?;
        Ok(Self(values))
    }

    pub fn zeros(num_pairs: usize) -> Self {
        Self(vec![0.0; num_pairs])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Constraint violations `g_i(x, a)` in `[-1, 1]`, stored row-major by pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    num_constraints: usize,
    data: Vec<f64>,
}

impl ConstraintMatrix {
    pub fn new(num_pairs: usize, num_constraints: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_pairs * num_constraints {
            return Err(Error::Structure(format!(
                "constraint matrix has {} entries, expected {}",
                data.len(),
                num_pairs * num_constraints
            )));
        }
        check_range("constraint", &data, -1.0, 1.0, "[-1, 1]")?;
        Ok(Self {
            num_constraints,
            data,
        })
    }

    pub fn constant(num_pairs: usize, num_constraints: usize, value: f64) -> Result<Self> {
        Self::new(
            num_pairs,
            num_constraints,
            vec![value; num_pairs * num_constraints],
        )
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn num_pairs(&self) -> usize {
        if self.num_constraints == 0 {
            0
        } else {
            self.data.len() / self.num_constraints
        }
    }

    /// `G[x, a]`: the m-vector of violations at one pair.
    pub fn row(&self, pair: usize) -> &[f64] {
        &self.data[pair * self.num_constraints..(pair + 1) * self.num_constraints]
    }

    pub fn get(&self, pair: usize, i: usize) -> f64 {
        self.data[pair * self.num_constraints + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `G^T q` for pair masses `q`.
    pub fn apply(&self, masses: &[f64]) -> Vec<f64> {
        let m = self.num_constraints;
        let mut out = vec![0.0; m];
        for (pair, &q) in masses.iter().enumerate() {
            if q != 0.0 {
                for (o, g) in out.iter_mut().zip(self.row(pair)) {
                    *o += g * q;
                }
            }
        }
        out
    }
}

fn check_range(
    field: &'static str,
    values: &[f64],
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    match values
        .iter()
        .enumerate()
        .find(|(_, v)| !(lo..=hi).contains(*v))
    {
        Some((index, &value)) => Err(Error::OutOfRange {
            field,
            index,
            value,
            range,
        }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub violations: Vec<f64>,
}

/// One episode of bandit feedback: only the visited pairs are observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `I_t(x, a)`.
    pub fn indicator(&self, x: usize, a: usize) -> bool {
        self.steps.iter().any(|s| s.state == x && s.action == a)
    }

    pub fn realized_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// `sum_h G_t[x_h, a_h]`.
    pub fn traversed_violations(&self, num_constraints: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_constraints];
        for s in &self.steps {
            for (o, g) in out.iter_mut().zip(&s.violations) {
                *o += g;
            }
        }
        out
    }
}

/// Forward pass computing `q^{P,pi}`.
pub fn occupancy_from_policy(mdp: &LoopFreeCmdp, policy: &Policy) -> Result<OccupancyMeasure> {
    policy.check_shape(mdp)?;
    let na = mdp.num_actions;
    let mut reach = vec![0.0; mdp.num_states()];
    reach[mdp.initial_state()] = 1.0;
    let mut q3 = vec![Vec::new(); mdp.num_pairs()];
    for h in 0..mdp.horizon() {
        for &x in mdp.layer(h) {
            let next = mdp.successors(x);
            for a in 0..na {
                let qa = reach[x] * policy.prob(x, a);
                let row: Vec<f64> = mdp.transition(x, a).iter().map(|p| qa * p).collect();
                for (&y, v) in next.iter().zip(&row) {
                    reach[y] += v;
                }
                q3[x * na + a] = row;
            }
        }
    }
    Ok(OccupancyMeasure {
        num_actions: na,
        q3,
    })
}

/// Recovers `(pi^q, P^q)` from a valid occupancy measure. Zero-mass states
/// get the uniform policy and zero-mass pairs the uniform next-layer kernel.
pub fn policy_from_occupancy(
    mdp: &LoopFreeCmdp,
    q: &OccupancyMeasure,
) -> Result<(Policy, Vec<Vec<f64>>)> {
    q.validate(mdp)?;
    let na = mdp.num_actions;
    let uniform = 1.0 / na as f64;
    let mut probs = vec![uniform; mdp.num_pairs()];
    let mut kernel = vec![Vec::new(); mdp.num_pairs()];
    for x in mdp.decision_states() {
        let pair_masses: Vec<f64> = (0..na).map(|a| q.pair_mass(x * na + a)).collect();
        let state_mass: f64 = pair_masses.iter().sum();
        if state_mass > 0.0 {
            for a in 0..na {
                probs[x * na + a] = pair_masses[a] / state_mass;
            }
        }
        let width = mdp.successors(x).len();
        for a in 0..na {
            let pair = x * na + a;
            kernel[pair] = if pair_masses[a] > 0.0 {
                q.edges(pair).iter().map(|v| v / pair_masses[a]).collect()
            } else {
                vec![1.0 / width as f64; width]
            };
        }
    }
    Ok((Policy::from_raw(na, probs), kernel))
}

/// `sum_{x,a} q(x,a) f(x,a)`.
pub fn evaluate(q: &OccupancyMeasure, f: &[f64]) -> Result<f64> {
    if f.len() != q.q3.len() {
        return Err(Error::Structure(format!(
            "function has {} entries, occupancy has {} pairs",
            f.len(),
            q.q3.len()
        )));
    }
    Ok(q.q3
        .iter()
        .zip(f)
        .map(|(row, v)| row.iter().sum::<f64>() * v)
        .sum())
}

/// Index drawn from `probs` with a single uniform `u` in `[0, 1)`.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples one episode under `policy`, recording feedback along the path.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &LoopFreeCmdp,
    policy: &Policy,
    reward: &RewardVector,
    constraints: &ConstraintMatrix,
    rng: &mut R,
) -> Trajectory {
    let mut x = mdp.initial_state();
    let mut steps = Vec::with_capacity(mdp.horizon());
    for _ in 0..mdp.horizon() {
        let a = sample_index(policy.action_probs(x), rng.random::<f64>());
        let pair = mdp.pair(x, a);
        steps.push(Step {
            state: x,
            action: a,
            reward: reward.as_slice()[pair],
            violations: constraints.row(pair).to_vec(),
        });
        let j = sample_index(mdp.transition(x, a), rng.random::<f64>());
        x = mdp.successors(x)[j];
    }
    Trajectory {
        steps,
        final_state: x,
    }
}

/// `Q^pi(x, a; f)` by backward induction under the true kernel.
pub fn action_values(mdp: &LoopFreeCmdp, policy: &Policy, f: &[f64]) -> Vec<f64> {
    let na = mdp.num_actions;
    let mut value = vec![0.0; mdp.num_states()];
    let mut q = vec![0.0; mdp.num_pairs()];
    for h in (0..mdp.horizon()).rev() {
        for &x in mdp.layer(h) {
            let next = mdp.successors(x);
            let mut v = 0.0;
            for a in 0..na {
                let cont: f64 = mdp
                    .transition(x, a)
                    .iter()
                    .zip(next)
                    .map(|(p, &y)| p * value[y])
                    .sum();
                q[x * na + a] = f[x * na + a] + cont;
                v += policy.prob(x, a) * q[x * na + a];
            }
            value[x] = v;
        }
    }
    q
}

/// Unconstrained optimum of `sum_h f(x_h, a_h)` and a greedy maximizer.
pub fn optimal_value(mdp: &LoopFreeCmdp, f: &[f64]) -> (f64, Policy) {
    let na = mdp.num_actions;
    let mut value = vec![0.0; mdp.num_states()];
    let mut choice = vec![0; mdp.num_states()];
    for h in (0..mdp.horizon()).rev() {
        for &x in mdp.layer(h) {
            let next = mdp.successors(x);
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let v = f[x * na + a]
                    + mdp
                        .transition(x, a)
                        .iter()
                        .zip(next)
                        .map(|(p, &y)| p * value[y])
                        .sum::<f64>();
                if v > best {
                    best = v;
                    choice[x] = a;
                }
            }
            value[x] = best;
        }
    }
    let policy = Policy::deterministic(mdp, &choice).expect("greedy choices are in range");
    (value[mdp.initial_state()], policy)
}
