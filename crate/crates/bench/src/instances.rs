//! Built-in instances and scenarios. The files under `data/` are the JSON
//! renderings of these.

use cmdp_core::LoopFreeCmdp;

use crate::scenario::{Noise, Process, Scenario};

/// Four states in three layers, two actions, one constraint.
pub fn tiny() -> LoopFreeCmdp {
    LoopFreeCmdp::from_fn(vec![vec![0], vec![1, 2], vec![3]], 2, 1, |x, a, y| {
        match (x, a) {
            (0, 0) => [0.8, 0.2][y - 1],
            (0, _) => [0.3, 0.7][y - 1],
            _ => 1.0,
        }
    })
    .expect("valid instance")
}

/// Means per pair of [`tiny`]: `(reward, constraint)`.
const TINY_MEANS: [(f64, f64); 8] = [
    (0.2, -0.2),
    (0.4, 0.1),
    (1.0, 0.6),
    (0.1, -0.6),
    (0.6, 0.2),
    (0.3, -0.4),
    (0.0, 0.0),
    (0.0, 0.0),
];

pub fn tiny_scenario() -> Scenario {
    Scenario {
        reward: Process::Stochastic {
            mean: TINY_MEANS.iter().map(|m| m.0).collect(),
            noise: Noise::Bernoulli,
        },
        constraints: Process::Stochastic {
            mean: TINY_MEANS.iter().map(|m| m.1).collect(),
            noise: Noise::Bernoulli,
        },
    }
}

/// Four states in three layers (`H = 2`), two actions, one constraint. The
/// first transition ignores the action; only the upper middle state trades
/// reward against the constraint.
pub fn trend() -> LoopFreeCmdp {
    LoopFreeCmdp::from_fn(
        vec![vec![0], vec![1, 2], vec![3]],
        2,
        1,
        |x, _, y| match x {
            0 => [0.6, 0.4][y - 1],
            _ => 1.0,
        },
    )
    .expect("valid instance")
}

const TREND_REWARD: [f64; 8] = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
const TREND_CONSTRAINT: [f64; 8] = [0.0, 0.0, 0.8, -0.8, 0.0, 0.0, 0.0, 0.0];

/// Fixed rewards, shifted-Bernoulli constraints on [`trend`]. The optimum
/// mixes both actions in state 1 (`OPT = 1.7`, margin `0.48`).
pub fn trend_scenario() -> Scenario {
    Scenario {
        reward: Process::Stochastic {
            mean: TREND_REWARD.to_vec(),
            noise: Noise::Fixed,
        },
        constraints: Process::Stochastic {
            mean: TREND_CONSTRAINT.to_vec(),
            noise: Noise::Bernoulli,
        },
    }
}

/// Practical-mode constants used for trend runs on [`trend`].
pub const TREND_PRIMAL_CONSTANT: f64 = 0.3;
pub const TREND_DUAL_SCALE: f64 = 0.3;

/// Constraints on [`trend`] alternating every `period` episodes between the
/// stochastic means and a copy shifted down by 0.4 (floored at -1) on the
/// non-terminal pairs.
/// Both phases admit a common feasible policy, so the weak baseline exists.
pub fn flip_scenario(period: usize) -> Scenario {
    let relaxed = TREND_CONSTRAINT
        .iter()
        .enumerate()
        .map(|(p, g)| if p >= 6 { 0.0 } else { (g - 0.4).max(-1.0) })
        .collect();
    Scenario {
        reward: Process::Stochastic {
            mean: TREND_REWARD.to_vec(),
            noise: Noise::Fixed,
        },
        constraints: Process::PeriodicFlip {
            phases: vec![TREND_CONSTRAINT.to_vec(), relaxed],
            period,
        },
    }
}
