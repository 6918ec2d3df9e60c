//! Reward shaping laboratory for robot-arm reaching.
//!
//! - [`rewards`]: position, direction, posture, stride and stage-incentive rewards
//! - [`arm_env`]: deterministic kinematic reacher
//! - [`neuro`]: small MLPs with analytic gradients and Adam
//! - [`agents`]: DDPG and SAC learners plus scripted controllers
//! - [`harness`]: training loop, convergence metrics, evaluation and comparison tables
//! - [`bridge`]: line-delimited JSON protocol exposing the environment

pub mod agents;
pub mod arm_env;
pub mod bridge;
pub mod harness;
pub mod neuro;
pub mod rewards;
pub mod seed;

pub use agents::{Agent, AgentConfig, Algorithm};
pub use arm_env::{ArmConfig, ArmEnv, EnvState, Pose, Transition};
pub use harness::{EpisodeRecord, RunConfig, RunSummary};
pub use rewards::{RewardConfig, RewardInputs, RewardKind, RewardSpec};
