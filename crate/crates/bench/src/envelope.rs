//! Theoretical bound dictionary evaluated at concrete instance sizes.
//!
//! Everything here is a pure function of [`EnvelopeParams`]. The constants
//! are far too large to be informative at laptop scale; they are reported so
//! that runs can be compared against them, not to gate anything.

use cmdp_core::{dual, oracle, primal, LoopFreeCmdp};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_constraints: usize,
    pub episodes: usize,
    pub delta: f64,
    pub rho: Option<f64>,
}

impl EnvelopeParams {
    pub fn for_mdp(mdp: &LoopFreeCmdp, episodes: usize, delta: f64, rho: Option<f64>) -> Self {
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            num_constraints: mdp.num_constraints(),
            episodes,
            delta,
            rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEnvelope {
    pub params: EnvelopeParams,
    /// `C = 252 |X| |A| H`.
    pub c: f64,
    /// `D = 84672 m H^2 |X|^2 |A|`.
    pub d: f64,
    pub dual_step: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
    pub d1: f64,
    pub d2: f64,
    pub b1: f64,
    pub f1: f64,
    /// `E^P_{1,T}` divided by `Xi`.
    pub primal_per_xi: f64,
    /// `E^D_{1,T}(0)` with `lambda_1 = 0`.
    pub dual: f64,
    pub concentration: f64,
    pub indicator: f64,
    /// `112 m H^2 / rho^2`; `None` when `rho` is unknown or zero.
    pub lambda_cap: Option<f64>,
    pub margin_condition_threshold: f64,
    pub margin_condition_holds: Option<bool>,
}

impl BoundEnvelope {
    /// `E^P_{t1,t2}` for loss range `xi`.
    pub fn primal(&self, t1: usize, t2: usize, xi: f64) -> f64 {
        let root_t = (self.params.episodes as f64).sqrt();
        let len = (t2 - t1 + 1) as f64;
        self.u1 * xi * self.c * root_t
            + self.u2 * xi * len / (self.c * root_t)
            + self.u3 * xi / (self.c * root_t)
            + self.u4 * xi * root_t
    }

    /// `E^D_{t1,t2}(0) = D1 ||lambda_{t1}||^2 / eta + D2 eta (t2 - t1 + 1)`.
    pub fn dual_interval(&self, lambda_t1_sq: f64, t1: usize, t2: usize) -> f64 {
        self.d1 * lambda_t1_sq / self.dual_step + self.d2 * self.dual_step * (t2 - t1 + 1) as f64
    }

    /// `E^G_{t1,t2} = B1 sqrt(t2 - t1 + 1)`.
    pub fn concentration_interval(&self, t1: usize, t2: usize) -> f64 {
        self.b1 * ((t2 - t1 + 1) as f64).sqrt()
    }

    /// `E^I_{t1,t2} = F1 sqrt(t2 - t1 + 1)`.
    pub fn indicator_interval(&self, t1: usize, t2: usize) -> f64 {
        self.f1 * ((t2 - t1 + 1) as f64).sqrt()
    }
}

pub fn envelope(params: &EnvelopeParams) -> BoundEnvelope {
    let x = params.num_states as f64;
    let a = params.num_actions as f64;
    let h = params.horizon as f64;
    let m = params.num_constraints as f64;
    let t = params.episodes as f64;
    let delta = params.delta;

    let c = 252.0 * x * a * h;
    let d = 84672.0 * m * h * h * x * x * a;
    let dual_step = 1.0 / (d * (a * x * x * t * t / delta).ln() * t.sqrt());
    let u1 = 6.0 * h * h * (h * a * t * t / delta).ln();
    let u2 = 9.0 * h * x * a;
    let u3 = 0.5 * h * (h * t * t / delta).ln();
    let u4 = 30.0 * h * h * x * x * (2.0 * a * (t * x * x * a / delta).ln()).sqrt();
    let d1 = 0.5;
    let d2 = m * h * h / 2.0;
    let b1 = 2.0 * h * (t * t / delta).ln().sqrt();
    let f1 = h * (2.0 * (t * t / delta).ln()).sqrt();

    let lambda_cap = params
        .rho
        .map(|rho| oracle::lambda_cap(params.num_constraints, params.horizon, rho))
        .filter(|v| v.is_finite());
    let threshold =
        oracle::margin_condition_threshold(params.episodes, params.horizon, params.num_constraints);
    let mut env = BoundEnvelope {
        params: *params,
        c,
        d,
        dual_step,
        u1,
        u2,
        u3,
        u4,
        d1,
        d2,
        b1,
        f1,
        primal_per_xi: 0.0,
        dual: 0.0,
        concentration: 0.0,
        indicator: 0.0,
        lambda_cap,
        margin_condition_threshold: threshold,
        margin_condition_holds: params.rho.map(|rho| rho > 0.0 && rho >= threshold),
    };
    let n = params.episodes.max(1);
    env.primal_per_xi = env.primal(1, n, 1.0);
    env.dual = env.dual_interval(0.0, 1, n);
    env.concentration = env.concentration_interval(1, n);
    env.indicator = env.indicator_interval(1, n);
    env
}

/// Checks the envelope against the learner's own constants for `mdp`.
pub fn matches_learner(mdp: &LoopFreeCmdp, env: &BoundEnvelope) -> bool {
    env.c == primal::paper_constant(mdp)
        && env.d == dual::paper_constant(mdp)
        && env.dual_step == dual::paper_step_size(mdp, env.params.episodes, env.params.delta)
}
