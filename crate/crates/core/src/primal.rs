//! Fixed-share policy optimization with dilated bonuses.
//!
//! One call to [`PrimalState::update`] performs a full learner step: the
//! optimistic importance-weighted Q estimate on the visited path, the
//! state bonus and its dilated backward recursion over the confidence set,
//! the fixed-share exponential-weights update, and finally the transition
//! estimate refresh.

use serde::{Deserialize, Serialize};

use crate::cmdp::{LoopFreeCmdp, Policy, Trajectory};
use crate::transition::ConfidenceModel;

/// How the constant `C` (and with it `gamma` and `eta_t`) is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantScale {
    /// `C = 252 |X| |A| H`.
    Paper,
    /// `C` supplied directly.
    Practical(f64),
}

pub fn paper_constant(mdp: &LoopFreeCmdp) -> f64 {
    252.0 * (mdp.num_states() * mdp.num_actions() * mdp.horizon()) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalConfig {
    pub episodes: usize,
    pub delta: f64,
    pub scale: ConstantScale,
    /// Overrides `sigma = 1/T`.
    pub sigma: Option<f64>,
    /// Overrides `gamma = 1/(C sqrt T)`.
    pub gamma: Option<f64>,
}

impl PrimalConfig {
    pub fn new(episodes: usize, delta: f64, scale: ConstantScale) -> Self {
        Self {
            episodes,
            delta,
            scale,
            sigma: None,
            gamma: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEstimates {
    /// `L_{t,h}` for `h = 0..H`.
    pub suffix_losses: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// `b_t(x)` per state.
    pub state_bonus: Vec<f64>,
    /// `B_t(x, a)` per pair.
    pub bonus: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrimalDiagnostics {
    pub eta: f64,
    pub max_q_hat: f64,
    pub max_bonus: f64,
    pub max_eta_q_hat: f64,
    pub max_eta_bonus: f64,
    /// Smallest action probability of the updated policy.
    pub min_policy_prob: f64,
    /// `min_policy_prob - sigma/|A|`.
    pub floor_margin: f64,
    pub new_epoch: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimalState {
    num_actions: usize,
    horizon: usize,
    episodes: usize,
    constant: f64,
    gamma: f64,
    sigma: f64,
    log_weights: Vec<f64>,
    policy: Policy,
    model: ConfidenceModel,
    episode: usize,
}

impl PrimalState {
    pub fn new(mdp: &LoopFreeCmdp, config: &PrimalConfig) -> Self {
        let constant = match config.scale {
            ConstantScale::Paper => paper_constant(mdp),
            ConstantScale::Practical(c) => c,
        };
        let root_t = (config.episodes as f64).sqrt();
        let policy = Policy::uniform(mdp);
        Self {
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            episodes: config.episodes,
            constant,
            gamma: config.gamma.unwrap_or(1.0 / (constant * root_t)),
            sigma: config.sigma.unwrap_or(1.0 / config.episodes as f64),
            log_weights: policy.as_slice().iter().map(|p| p.ln()).collect(),
            policy,
            model: ConfidenceModel::new(mdp, config.episodes, config.delta),
            episode: 1,
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn model(&self) -> &ConfidenceModel {
        &self.model
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Policy floor `sigma / |A|` guaranteed from the second episode on.
    pub fn floor(&self) -> f64 {
        self.sigma / self.num_actions as f64
    }

    /// `eta_t = 1 / (2 H Xi_t C sqrt T)`.
    pub fn eta(&self, xi: f64) -> f64 {
        1.0 / (2.0 * self.horizon as f64 * xi * self.constant * (self.episodes as f64).sqrt())
    }

    /// Estimates for the current episode against the current confidence set.
    pub fn estimates(
        &self,
        mdp: &LoopFreeCmdp,
        trajectory: &Trajectory,
        losses: &[f64],
        xi: f64,
    ) -> EpisodeEstimates {
        let upper = self.model.upper_occupancy(mdp, &self.policy);
        let lower = self.model.lower_occupancy(mdp, &self.policy);
        let (suffix_losses, q_hat) = estimate_q(mdp, trajectory, losses, &upper, self.gamma);
        let (state_bonus, bonus) = compute_bonus(
            mdp,
            &self.model,
            &self.policy,
            xi,
            self.gamma,
            &upper,
            &lower,
        );
        EpisodeEstimates {
            suffix_losses,
            q_hat,
            upper,
            lower,
            state_bonus,
            bonus,
        }
    }

    /// One FS-PODB step with the episode's trajectory, per-layer losses and
    /// loss-range bound `xi`.
    pub fn update(
        &mut self,
        mdp: &LoopFreeCmdp,
        trajectory: &Trajectory,
        losses: &[f64],
        xi: f64,
    ) -> PrimalDiagnostics {
        let eta = self.eta(xi);
        let est = self.estimates(mdp, trajectory, losses, xi);
        let (log_weights, probs) = fixed_share_update(
            mdp,
            &self.log_weights,
            &est.q_hat,
            &est.bonus,
            eta,
            self.sigma,
        );
        self.log_weights = log_weights;
        self.policy = Policy::from_raw(self.num_actions, probs);
        let new_epoch = self.model.update(mdp, trajectory);
        self.episode += 1;

        let mut diag = PrimalDiagnostics {
            eta,
            min_policy_prob: f64::INFINITY,
            new_epoch,
            ..Default::default()
        };
        for x in mdp.decision_states() {
            for a in 0..self.num_actions {
                let p = x * self.num_actions + a;
                diag.max_q_hat = diag.max_q_hat.max(est.q_hat[p]);
                diag.max_bonus = diag.max_bonus.max(est.bonus[p]);
                diag.min_policy_prob = diag.min_policy_prob.min(self.policy.prob(x, a));
            }
        }
        diag.max_eta_q_hat = eta * diag.max_q_hat;
        diag.max_eta_bonus = eta * diag.max_bonus;
        diag.floor_margin = diag.min_policy_prob - self.floor();
        diag
    }
}

/// Suffix losses `L_{t,h}` and `Q̂_t(x,a) = L_{t,h} / (q̄(x,a) + gamma)` on the
/// visited pairs, zero elsewhere.
pub fn estimate_q(
    mdp: &LoopFreeCmdp,
    trajectory: &Trajectory,
    losses: &[f64],
    upper: &[f64],
    gamma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let horizon = trajectory.steps.len();
    let mut suffix = vec![0.0; horizon];
    let mut acc = 0.0;
    for h in (0..horizon).rev() {
        acc += losses[h];
        suffix[h] = acc;
    }
    let mut q_hat = vec![0.0; mdp.num_pairs()];
    for (h, step) in trajectory.steps.iter().enumerate() {
        let p = mdp.pair(step.state, step.action);
        q_hat[p] = suffix[h] / (upper[p] + gamma);
    }
    (suffix, q_hat)
}

/// State bonus `b_t(x)` and the dilated bonus `B_t(x, a)`, built backward
/// from `B_t(x_H, ·) = 0` with optimistic next-state expectations.
pub fn compute_bonus(
    mdp: &LoopFreeCmdp,
    model: &ConfidenceModel,
    policy: &Policy,
    xi: f64,
    gamma: f64,
    upper: &[f64],
    lower: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let na = mdp.num_actions();
    let h_f = mdp.horizon() as f64;
    let mut state_bonus = vec![0.0; mdp.num_states()];
    for x in mdp.decision_states() {
        state_bonus[x] = (0..na)
            .map(|a| {
                let p = x * na + a;
                policy.prob(x, a) * (3.0 * gamma * h_f * xi + h_f * xi * (upper[p] - lower[p]))
                    / (upper[p] + gamma)
            })
            .sum();
    }
    let mut bonus = vec![0.0; mdp.num_pairs()];
    // E_{a ~ pi}[B(x, a)] per state
    let mut expected = vec![0.0; mdp.num_states()];
    let dilation = 1.0 + 1.0 / h_f;
    let mut values = Vec::new();
    for h in (0..mdp.horizon()).rev() {
        for &x in mdp.layer(h) {
            values.clear();
            values.extend(mdp.successors(x).iter().map(|&y| expected[y]));
            let mut e = 0.0;
            for a in 0..na {
                let p = x * na + a;
                bonus[p] = state_bonus[x] + dilation * model.max_expectation(p, &values);
                e += policy.prob(x, a) * bonus[p];
            }
            expected[x] = e;
        }
    }
    (state_bonus, bonus)
}

/// Fixed-share exponential weights on `Q̂ - B`.
///
/// With `s = softmax(log w - eta (Q̂ - B))` per state the update is
/// `pi' = (1 - sigma) s + sigma / |A|`; the weights are renormalized to `pi'`
/// (the update is homogeneous in `w`) and returned in log space.
pub fn fixed_share_update(
    mdp: &LoopFreeCmdp,
    log_weights: &[f64],
    q_hat: &[f64],
    bonus: &[f64],
    eta: f64,
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let na = mdp.num_actions();
    let floor = sigma / na as f64;
    let mut out_log = log_weights.to_vec();
    let mut probs: Vec<f64> = log_weights.iter().map(|v| v.exp()).collect();
    let mut z = vec![0.0; na];
    for x in mdp.decision_states() {
        for a in 0..na {
            let p = x * na + a;
            z[a] = log_weights[p] - eta * (q_hat[p] - bonus[p]);
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = z.iter().map(|v| (v - max).exp()).sum();
        for a in 0..na {
            let p = x * na + a;
            let soft = (z[a] - max).exp() / norm;
            probs[p] = (1.0 - sigma) * soft + floor;
            out_log[p] = probs[p].ln();
        }
    }
    (out_log, probs)
}

/// Whether every step loss lies in `[0, xi]`.
pub fn loss_range_check(losses: &[f64], xi: f64) -> bool {
    losses.iter().all(|l| (0.0..=xi).contains(l))
}
