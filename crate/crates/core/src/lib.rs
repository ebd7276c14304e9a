//! Oversteer-control benchmark and hybrid imitation/reinforcement learner.

// `!(x > 0.0)` is used on purpose in validation so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demonstrator;
pub mod dynamics;
pub mod env;
pub mod harness;
pub mod learner;
pub mod nn;
pub mod replay;

pub use demonstrator::{DemoPolicyConfig, DemoStats};
pub use dynamics::{KickPlate, VehicleParams, VehicleState};
pub use env::{EnvConfig, Observation, OversteerEnv, Scenario, TerminalCause, TrajectoryRecord, OBS_DIM};
pub use harness::{HarnessError, RunConfig, SuccessReport};
pub use learner::{AblationFlags, Algorithm, HyperParams, Learner, StepMetrics};
pub use replay::{DemoDataset, ReplayBuffer, Transition};
