//! Loop-free constrained MDPs and a primal-dual learner that runs unchanged
//! against stochastic and adversarial rewards and constraints.

pub mod cmdp;
pub mod dual;
pub mod error;
pub mod generate;
pub mod lp;
pub mod meta;
pub mod oracle;
pub mod primal;
pub mod rng;
pub mod transition;

pub use cmdp::{
    ConstraintMatrix, LoopFreeCmdp, OccupancyMeasure, Policy, RewardVector, Step, Trajectory,
};
pub use error::{Error, Result};
pub use meta::{run, CostSource, Learner, Mode, RunConfig, RunRecord, XiRule};
pub use rng::{RngStreams, Stream};
