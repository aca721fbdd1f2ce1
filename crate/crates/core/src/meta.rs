//! The primal-dual episode loop.
//!
//! Each episode plays the current policy, builds the scaled Lagrangian loss
//! on the visited pairs, hands it to the primal learner together with the
//! current loss-range bound `Xi_t`, takes a dual step on the traversed
//! violations and finally refreshes `Gamma` and `Xi`. The loop never sees
//! the Slater margin and treats stochastic and adversarial cost sources the
//! same way.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{
    occupancy_from_policy, rollout, ConstraintMatrix, LoopFreeCmdp, Policy, RewardVector,
    Trajectory,
};
use crate::dual::{self, DualState};
use crate::error::{Error, Result};
use crate::primal::{
    loss_range_check, ConstantScale, PrimalConfig, PrimalDiagnostics, PrimalState,
};
use crate::rng::{RngStreams, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every constant exactly as in the analysis.
    Paper,
    /// Primal constant and dual step size taken from the config.
    Practical,
}

/// Which `Gamma` feeds the loss-range recurrence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiRule {
    /// `Xi_{t+1} = max(Xi_t, 2 Gamma_t)`.
    #[default]
    PreStep,
    /// `Xi_{t+1} = max(Xi_t, 2 Gamma_{t+1})`.
    PostStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub episodes: usize,
    pub delta: f64,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default)]
    pub xi_rule: XiRule,
    /// `C` in practical mode.
    pub primal_constant: f64,
    /// Dual step size in practical mode; `None` picks
    /// `min(dual_scale/sqrt(T), 1/(2 m H))`.
    pub dual_step: Option<f64>,
    #[serde(default = "default_dual_scale")]
    pub dual_scale: f64,
    #[serde(default)]
    pub keep_policies: bool,
    #[serde(default)]
    pub keep_occupancies: bool,
}

fn default_dual_scale() -> f64 {
    1.0
}

impl RunConfig {
    pub fn new(episodes: usize, mode: Mode, seed: u64) -> Self {
        Self {
            episodes,
            delta: 0.05,
            mode,
            seed,
            xi_rule: XiRule::PreStep,
            primal_constant: 1.0,
            dual_step: None,
            dual_scale: default_dual_scale(),
            keep_policies: false,
            keep_occupancies: false,
        }
    }

    pub fn primal_config(&self) -> PrimalConfig {
        let scale = match self.mode {
            Mode::Paper => ConstantScale::Paper,
            Mode::Practical => ConstantScale::Practical(self.primal_constant),
        };
        PrimalConfig::new(self.episodes, self.delta, scale)
    }

    pub fn dual_step_size(&self, mdp: &LoopFreeCmdp) -> f64 {
        match self.mode {
            Mode::Paper => dual::paper_step_size(mdp, self.episodes, self.delta),
            Mode::Practical => self.dual_step.unwrap_or_else(|| {
                let mh = (mdp.num_constraints().max(1) * mdp.horizon()) as f64;
                (self.dual_scale / (self.episodes as f64).sqrt()).min(1.0 / (2.0 * mh))
            }),
        }
    }
}

/// Supplies `(r_t, G_t)` for each episode. `policy` is `pi_t`, available to
/// adaptive adversaries; oblivious sources ignore it.
pub trait CostSource {
    fn costs(
        &mut self,
        episode: usize,
        policy: &Policy,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<(RewardVector, ConstraintMatrix)>;
}

/// Loss-scale bookkeeping: `Gamma_t = 1 + ||lambda_t||_1` and `Xi_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub gamma: f64,
    pub xi: f64,
    pub episode: usize,
    pub rule: XiRule,
}

impl MetaState {
    pub fn new(rule: XiRule) -> Self {
        Self {
            gamma: 1.0,
            xi: 2.0,
            episode: 1,
            rule,
        }
    }

    /// Advances to `t + 1` given `||lambda_{t+1}||_1`.
    pub fn advance(&mut self, next_l1: f64) {
        let next_gamma = 1.0 + next_l1;
        let driver = match self.rule {
            XiRule::PreStep => self.gamma,
            XiRule::PostStep => next_gamma,
        };
        self.xi = self.xi.max(2.0 * driver);
        self.gamma = next_gamma;
        self.episode += 1;
    }
}

/// Scaled Lagrangian loss `Gamma_t + sum_i lambda_i g_i - r` at one pair.
///
/// Evaluated as `(1 - r) + sum_i lambda_i (1 + g_i)`, the same value written
/// as a sum of nonnegative terms so the lower end of the range survives
/// rounding.
pub fn scaled_loss(lambda: &[f64], violations: &[f64], reward: f64) -> f64 {
    (1.0 - reward)
        + lambda
            .iter()
            .zip(violations)
            .map(|(l, g)| l * (1.0 + g))
            .sum::<f64>()
}

/// Unscaled Lagrangian loss `sum_i lambda_i g_i - r`.
pub fn lagrangian_loss(lambda: &[f64], violations: &[f64], reward: f64) -> f64 {
    lambda
        .iter()
        .zip(violations)
        .map(|(l, g)| l * g)
        .sum::<f64>()
        - reward
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: usize,
    /// `r_t^T q_t` under the true kernel.
    pub reward: f64,
    /// `G_t^T q_t`.
    pub violation: Vec<f64>,
    /// `sum_h G_t[x_h, a_h]`.
    pub traversed_violation: Vec<f64>,
    pub realized_reward: f64,
    /// `lambda_t` used during the episode.
    pub lambda: Vec<f64>,
    pub lambda_l1: f64,
    pub gamma: f64,
    pub xi: f64,
    pub min_loss: f64,
    pub max_loss: f64,
    pub primal: PrimalDiagnostics,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub dual_step: f64,
    pub lambda_box: f64,
    pub policy_floor: f64,
    pub episodes: Vec<EpisodeRecord>,
    pub final_lambda: Vec<f64>,
    /// `pi_t` per episode when requested.
    pub policies: Option<Vec<Vec<f64>>>,
    /// `q_t(x, a)` per episode when requested.
    pub occupancies: Option<Vec<Vec<f64>>>,
}

pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub record: EpisodeRecord,
    pub occupancy: Vec<f64>,
}

/// Primal, dual and meta state of one learning run.
pub struct Learner {
    pub primal: PrimalState,
    pub dual: DualState,
    pub meta: MetaState,
}

impl Learner {
    pub fn new(mdp: &LoopFreeCmdp, config: &RunConfig) -> Self {
        Self {
            primal: PrimalState::new(mdp, &config.primal_config()),
            dual: DualState::new(
                mdp.num_constraints(),
                config.dual_step_size(mdp),
                config.episodes,
            ),
            meta: MetaState::new(config.xi_rule),
        }
    }

    pub fn policy(&self) -> &Policy {
        self.primal.policy()
    }

    pub fn run_episode<R: Rng + ?Sized>(
        &mut self,
        mdp: &LoopFreeCmdp,
        reward: &RewardVector,
        constraints: &ConstraintMatrix,
        rng: &mut R,
    ) -> Result<EpisodeOutcome> {
        let t = self.meta.episode;
        if reward.len() != mdp.num_pairs()
            || constraints.num_constraints() != mdp.num_constraints()
            || (mdp.num_constraints() > 0 && constraints.num_pairs() != mdp.num_pairs())
        {
            return Err(Error::Structure(format!(
                "episode {t}: cost dimensions do not match the MDP"
            )));
        }
        let occupancy = occupancy_from_policy(mdp, self.primal.policy())?.pair_masses();
        let expected_reward: f64 = occupancy
            .iter()
            .zip(reward.as_slice())
            .map(|(q, r)| q * r)
            .sum();
        let violation = constraints.apply(&occupancy);

        let trajectory = rollout(mdp, self.primal.policy(), reward, constraints, rng);
        let lambda = self.dual.lambda().to_vec();
        let lambda_l1 = self.dual.l1();
        if self.meta.gamma != 1.0 + lambda_l1 {
            return Err(Error::InvariantFailure {
                episode: t,
                detail: format!(
                    "Gamma {} != 1 + ||lambda||_1 = {}",
                    self.meta.gamma,
                    1.0 + lambda_l1
                ),
            });
        }
        let losses: Vec<f64> = trajectory
            .steps
            .iter()
            .map(|s| scaled_loss(&lambda, &s.violations, s.reward))
            .collect();
        let xi = self.meta.xi;
        if !loss_range_check(&losses, xi) {
            return Err(Error::InvariantFailure {
                episode: t,
                detail: format!("loss outside [0, {xi}]: {losses:?}"),
            });
        }
        let primal = self.primal.update(mdp, &trajectory, &losses, xi);
        let traversed = trajectory.traversed_violations(mdp.num_constraints());
        self.dual.step(&traversed);
        let record = EpisodeRecord {
            t,
            reward: expected_reward,
            violation,
            traversed_violation: traversed,
            realized_reward: trajectory.realized_reward(),
            lambda,
            lambda_l1,
            gamma: self.meta.gamma,
            xi,
            min_loss: losses.iter().copied().fold(f64::INFINITY, f64::min),
            max_loss: losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            primal,
        };
        self.meta.advance(self.dual.l1());
        Ok(EpisodeOutcome {
            trajectory,
            record,
            occupancy,
        })
    }
}

/// A full learning run of `config.episodes` episodes.
pub fn run(
    mdp: &LoopFreeCmdp,
    source: &mut dyn CostSource,
    config: &RunConfig,
) -> Result<RunRecord> {
    if config.episodes == 0 {
        return Err(Error::Structure("episodes must be positive".into()));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(Error::Structure(format!(
            "delta = {} must lie in (0, 1)",
            config.delta
        )));
    }
    let streams = RngStreams::new(config.seed);
    let mut learner = Learner::new(mdp, config);
    let mut episodes = Vec::with_capacity(config.episodes);
    let mut policies = config.keep_policies.then(Vec::new);
    let mut occupancies = config.keep_occupancies.then(Vec::new);
    for t in 1..=config.episodes {
        let mut cost_rng = streams.episode(Stream::Scenario, t as u64);
        let (reward, constraints) = source.costs(t, learner.policy(), &mut cost_rng)?;
        if let Some(p) = policies.as_mut() {
            p.push(learner.policy().as_slice().to_vec());
        }
        let mut rng = streams.episode(Stream::Trajectory, t as u64);
        let outcome = learner.run_episode(mdp, &reward, &constraints, &mut rng)?;
        if let Some(q) = occupancies.as_mut() {
            q.push(outcome.occupancy);
        }
        episodes.push(outcome.record);
    }
    Ok(RunRecord {
        config: config.clone(),
        dual_step: learner.dual.eta(),
        lambda_box: learner.dual.cap(),
        policy_floor: learner.primal.floor(),
        episodes,
        final_lambda: learner.dual.lambda().to_vec(),
        policies,
        occupancies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_endpoints() {
        assert_eq!(scaled_loss(&[0.0], &[0.3], 0.25), 0.75);
        assert_eq!(scaled_loss(&[0.5], &[-1.0], 1.0), 0.0);
        assert_eq!(lagrangian_loss(&[0.5], &[-1.0], 1.0), -1.5);
        let l = [0.7, 0.2];
        let g = [0.4, -0.9];
        let direct = 1.0 + 0.9 + lagrangian_loss(&l, &g, 0.3);
        assert!((scaled_loss(&l, &g, 0.3) - direct).abs() < 1e-15);
    }

    #[test]
    fn xi_recurrences() {
        let mut box_rule = MetaState::new(XiRule::PreStep);
        let mut post = MetaState::new(XiRule::PostStep);
        assert_eq!((box_rule.gamma, box_rule.xi), (1.0, 2.0));
        box_rule.advance(0.5);
        post.advance(0.5);
        assert_eq!(box_rule.xi, 2.0);
        assert_eq!(post.xi, 3.0);
        box_rule.advance(0.5);
        assert_eq!(box_rule.xi, 3.0);
        box_rule.advance(0.0);
        assert_eq!(box_rule.xi, 3.0);
        assert_eq!(box_rule.gamma, 1.0);
    }
}
