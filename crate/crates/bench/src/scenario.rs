//! Reward and constraint generators.
//!
//! A scenario pairs one [`Process`] for rewards with one for constraints.
//! Reward vectors have one entry per pair of the flat `x * |A| + a` index;
//! constraint vectors are pair-major with `m` entries per pair.

use std::collections::BTreeSet;

use cmdp_core::meta::CostSource;
use cmdp_core::{ConstraintMatrix, LoopFreeCmdp, Policy, RewardVector, RngStreams, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Per-entry noise around a configured mean.
///
/// For constraints the draw is mapped affinely from `[0, 1]` onto
/// `[-1, 1]`, so `bernoulli` there is a shifted Bernoulli with the same mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    Fixed,
    Bernoulli,
    Beta { concentration: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    /// First episode (1-based) the values apply to.
    pub start: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Process {
    /// i.i.d. draws with the given means.
    Stochastic { mean: Vec<f64>, noise: Noise },
    /// Episode `t` uses `values[(t - 1) % len]`.
    Sequence { values: Vec<Vec<f64>> },
    /// Phase `((t - 1) / period) % phases.len()`.
    PeriodicFlip {
        phases: Vec<Vec<f64>>,
        period: usize,
    },
    /// The last piece whose `start` is at most `t`.
    Piecewise { pieces: Vec<Piece> },
    /// Rewards only: `base(x, a) * (1 - strength * pi_t(a | x))`, which
    /// penalizes whatever the learner currently favours.
    AdaptiveReward { base: Vec<f64>, strength: f64 },
}

impl Process {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Process::Stochastic { .. })
    }

    fn check(
        &self,
        field: &str,
        len: usize,
        lo: f64,
        hi: f64,
        allow_adaptive: bool,
    ) -> Result<(), BenchError> {
        let check_vec = |name: String, v: &[f64]| -> Result<(), BenchError> {
            if v.len() != len {
                return Err(BenchError::Config {
                    field: name,
                    detail: format!("expected {len} entries, found {}", v.len()),
                });
            }
            if let Some((j, x)) = v.iter().enumerate().find(|(_, x)| !(lo..=hi).contains(*x)) {
                return Err(BenchError::Config {
                    field: format!("{name}[{j}]"),
                    detail: format!("{x} outside [{lo}, {hi}]"),
                });
            }
            Ok(())
        };
        match self {
            Process::Stochastic { mean, noise } => {
                if let Noise::Beta { concentration } = noise {
                    if !(*concentration > 0.0 && concentration.is_finite()) {
                        return Err(BenchError::Config {
                            field: format!("{field}.noise.concentration"),
                            detail: format!("{concentration} must be positive"),
                        });
                    }
                }
                check_vec(format!("{field}.mean"), mean)
            }
            Process::Sequence { values } => {
                if values.is_empty() {
                    return Err(BenchError::Config {
                        field: format!("{field}.values"),
                        detail: "empty sequence".into(),
                    });
                }
                values
                    .iter()
                    .enumerate()
                    .try_for_each(|(k, v)| check_vec(format!("{field}.values[{k}]"), v))
            }
            Process::PeriodicFlip { phases, period } => {
                if phases.is_empty() || *period == 0 {
                    return Err(BenchError::Config {
                        field: format!("{field}.period"),
                        detail: "need at least one phase and a positive period".into(),
                    });
                }
                phases
                    .iter()
                    .enumerate()
                    .try_for_each(|(k, v)| check_vec(format!("{field}.phases[{k}]"), v))
            }
            Process::Piecewise { pieces } => {
                if pieces.first().map(|p| p.start) != Some(1) {
                    return Err(BenchError::Config {
                        field: format!("{field}.pieces[0].start"),
                        detail: "the first piece must start at episode 1".into(),
                    });
                }
                if let Some(k) = pieces.windows(2).position(|w| w[1].start <= w[0].start) {
                    return Err(BenchError::Config {
                        field: format!("{field}.pieces[{}].start", k + 1),
                        detail: "starts must be strictly increasing".into(),
                    });
                }
                pieces.iter().enumerate().try_for_each(|(k, p)| {
                    check_vec(format!("{field}.pieces[{k}].values"), &p.values)
                })
            }
            Process::AdaptiveReward { base, strength } => {
                if !allow_adaptive {
                    return Err(BenchError::Config {
                        field: format!("{field}.kind"),
                        detail: "adaptive_reward is only available for rewards".into(),
                    });
                }
                if !(0.0..=1.0).contains(strength) {
                    return Err(BenchError::Config {
                        field: format!("{field}.strength"),
                        detail: format!("{strength} outside [0, 1]"),
                    });
                }
                check_vec(format!("{field}.base"), base)
            }
        }
    }

    /// Expected value per entry for stochastic processes.
    fn mean(&self) -> Option<&[f64]> {
        match self {
            Process::Stochastic { mean, .. } => Some(mean),
            _ => None,
        }
    }

    /// Draw for episode `t`. `signed` maps unit-interval draws onto `[-1, 1]`.
    fn draw(&self, t: usize, signed: bool, policy: &Policy, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Process::Stochastic { mean, noise } => mean
                .iter()
                .map(|&mu| {
                    let unit = if signed { (mu + 1.0) / 2.0 } else { mu };
                    let u = match noise {
                        Noise::Fixed => return mu,
                        Noise::Bernoulli => f64::from(rng.random::<f64>() < unit),
                        Noise::Beta { concentration } => {
                            if unit <= 0.0 || unit >= 1.0 {
                                unit
                            } else {
                                Beta::new(unit * concentration, (1.0 - unit) * concentration)
                                    .expect("validated parameters")
                                    .sample(rng)
                            }
                        }
                    };
                    if signed {
                        2.0 * u - 1.0
                    } else {
                        u
                    }
                })
                .collect(),
            Process::Sequence { values } => values[(t - 1) % values.len()].clone(),
            Process::PeriodicFlip { phases, period } => {
                phases[((t - 1) / period) % phases.len()].clone()
            }
            Process::Piecewise { pieces } => {
                let k = pieces.partition_point(|p| p.start <= t);
                pieces[k - 1].values.clone()
            }
            Process::AdaptiveReward { base, strength } => base
                .iter()
                .zip(policy.as_slice())
                .map(|(b, p)| b * (1.0 - strength * p))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub reward: Process,
    pub constraints: Process,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, BenchError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks vector lengths and value ranges against `mdp`.
    pub fn validate(&self, mdp: &LoopFreeCmdp) -> Result<(), BenchError> {
        let n = mdp.num_pairs();
        self.reward.check("reward", n, 0.0, 1.0, true)?;
        self.constraints
            .check("constraints", n * mdp.num_constraints(), -1.0, 1.0, false)
    }

    pub fn stochastic_constraints(&self) -> bool {
        self.constraints.is_stochastic()
    }

    pub fn stochastic_rewards(&self) -> bool {
        self.reward.is_stochastic()
    }

    /// Replays the oblivious draws of a run with `seed` into explicit
    /// sequences. Adaptive rewards depend on the learner and are rejected.
    pub fn materialize(
        &self,
        mdp: &LoopFreeCmdp,
        episodes: usize,
        seed: u64,
    ) -> Result<Scenario, BenchError> {
        if matches!(self.reward, Process::AdaptiveReward { .. }) {
            return Err(BenchError::Config {
                field: "reward.kind".into(),
                detail: "adaptive rewards cannot be materialized".into(),
            });
        }
        let mut source = ScenarioSource::new(mdp, self.clone(), seed)?;
        let uniform = Policy::uniform(mdp);
        let mut rewards = Vec::with_capacity(episodes);
        let mut constraints = Vec::with_capacity(episodes);
        for t in 1..=episodes {
            let (r, g) = source.draw(t, &uniform)?;
            rewards.push(r.as_slice().to_vec());
            constraints.push(g.as_slice().to_vec());
        }
        Ok(Scenario {
            reward: Process::Sequence { values: rewards },
            constraints: Process::Sequence {
                values: constraints,
            },
        })
    }
}

/// Running totals of what a source emitted.
#[derive(Clone, Debug)]
pub struct EmissionLog {
    pub episodes: usize,
    pub reward_sum: Vec<f64>,
    pub constraint_sum: Vec<f64>,
    /// Distinct constraint matrices seen, capped at `distinct_cap`.
    distinct: BTreeSet<Vec<u64>>,
    pub distinct_overflow: bool,
    distinct_cap: usize,
}

impl EmissionLog {
    fn new(num_pairs: usize, width: usize, cap: usize) -> Self {
        Self {
            episodes: 0,
            reward_sum: vec![0.0; num_pairs],
            constraint_sum: vec![0.0; width],
            distinct: BTreeSet::new(),
            distinct_overflow: false,
            distinct_cap: cap,
        }
    }

    fn record(&mut self, r: &[f64], g: &[f64]) {
        self.episodes += 1;
        for (s, v) in self.reward_sum.iter_mut().zip(r) {
            *s += v;
        }
        for (s, v) in self.constraint_sum.iter_mut().zip(g) {
            *s += v;
        }
        if !self.distinct_overflow {
            self.distinct
                .insert(g.iter().map(|v| v.to_bits()).collect());
            if self.distinct.len() > self.distinct_cap {
                self.distinct_overflow = true;
                self.distinct.clear();
            }
        }
    }

    /// The distinct matrices seen, or `None` after overflow.
    pub fn distinct_constraints(
        &self,
        num_pairs: usize,
        m: usize,
    ) -> Option<Vec<ConstraintMatrix>> {
        if self.distinct_overflow {
            return None;
        }
        Some(
            self.distinct
                .iter()
                .map(|bits| {
                    let data = bits.iter().map(|b| f64::from_bits(*b)).collect();
                    ConstraintMatrix::new(num_pairs, m, data).expect("emitted matrices are valid")
                })
                .collect(),
        )
    }
}

/// Feeds a scenario to the learner and logs the emitted costs.
pub struct ScenarioSource {
    scenario: Scenario,
    num_pairs: usize,
    num_constraints: usize,
    streams: RngStreams,
    pub log: EmissionLog,
}

impl ScenarioSource {
    pub fn new(mdp: &LoopFreeCmdp, scenario: Scenario, seed: u64) -> Result<Self, BenchError> {
        scenario.validate(mdp)?;
        let n = mdp.num_pairs();
        let m = mdp.num_constraints();
        Ok(Self {
            scenario,
            num_pairs: n,
            num_constraints: m,
            streams: RngStreams::new(seed),
            log: EmissionLog::new(n, n * m, cmdp_core::oracle::MAX_DISTINCT_ROWS),
        })
    }

    fn draw(
        &mut self,
        t: usize,
        policy: &Policy,
    ) -> Result<(RewardVector, ConstraintMatrix), BenchError> {
        let mut rng = self.streams.episode(Stream::Scenario, t as u64);
        self.emit(t, policy, &mut rng)
    }

    fn emit(
        &mut self,
        t: usize,
        policy: &Policy,
        rng: &mut ChaCha8Rng,
    ) -> Result<(RewardVector, ConstraintMatrix), BenchError> {
        let r = self.scenario.reward.draw(t, false, policy, rng);
        let g = self.scenario.constraints.draw(t, true, policy, rng);
        self.log.record(&r, &g);
        Ok((
            RewardVector::new(r)?,
            ConstraintMatrix::new(self.num_pairs, self.num_constraints, g)?,
        ))
    }

    /// `r̄` and `Ḡ`: distribution means for stochastic processes, empirical
    /// averages of the emitted values otherwise.
    pub fn averages(&self) -> Result<(RewardVector, ConstraintMatrix), BenchError> {
        let k = self.log.episodes.max(1) as f64;
        let r = match self.scenario.reward.mean() {
            Some(mean) => mean.to_vec(),
            None => self
                .log
                .reward_sum
                .iter()
                .map(|s| (s / k).clamp(0.0, 1.0))
                .collect(),
        };
        let g = match self.scenario.constraints.mean() {
            Some(mean) => mean.to_vec(),
            None => self
                .log
                .constraint_sum
                .iter()
                .map(|s| (s / k).clamp(-1.0, 1.0))
                .collect(),
        };
        Ok((
            RewardVector::new(r)?,
            ConstraintMatrix::new(self.num_pairs, self.num_constraints, g)?,
        ))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}

impl CostSource for ScenarioSource {
    fn costs(
        &mut self,
        episode: usize,
        policy: &Policy,
        rng: &mut ChaCha8Rng,
    ) -> cmdp_core::Result<(RewardVector, ConstraintMatrix)> {
        self.emit(episode, policy, rng).map_err(|e| match e {
            BenchError::Core(e) => e,
            other => cmdp_core::Error::Structure(other.to_string()),
        })
    }
}
