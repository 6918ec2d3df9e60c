//! Off-policy actor-critic learners and scripted controllers.
//!
//! Both learners perform one gradient step per environment step once the
//! warmup period is over, and soft-update their target networks after each
//! step. Terminal bootstrapping follows [`ReplayBuffer::push`]: only a
//! success ends the return; a time-limit cut keeps bootstrapping.

mod checkpoint;
mod ddpg;
mod replay;
mod sac;
mod scripted;

pub use checkpoint::{AgentSnapshot, Checkpoint, RngState, CHECKPOINT_VERSION};
pub use ddpg::Ddpg;
pub use replay::{Batch, ReplayBuffer};
pub use sac::Sac;
pub use scripted::{OracleMode, ReachOracle, ZeroAgent};

use crate::arm_env::Transition;
use crate::neuro::{Activation, Mlp, NeuroError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("observation has length {got}, expected {expected}")]
    ObservationLength { expected: usize, got: usize },
    #[error("non-finite {what} at update {step}")]
    Diverged { what: &'static str, step: u64 },
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ddpg,
    Sac,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::Sac => "sac",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ddpg" => Ok(Algorithm::Ddpg),
            "sac" => Ok(Algorithm::Sac),
            _ => Err(format!("unknown algorithm `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Hidden layer widths shared by actor and critics.
    pub hidden: Vec<usize>,
    /// Gaussian action noise stddev for DDPG, on the `[-1, 1]` action scale.
    pub exploration_noise: f64,
    /// SAC: learn the entropy temperature towards target entropy `-N`.
    pub auto_temperature: bool,
    /// SAC: initial (or fixed) entropy temperature.
    pub temperature: f64,
    pub temperature_lr: f64,
    /// Steps of uniform-random actions before learning starts.
    pub warmup_steps: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ddpg,
            gamma: 0.98,
            tau: 0.005,
            batch_size: 128,
            buffer_capacity: 200_000,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            exploration_noise: 0.1,
            auto_temperature: true,
            temperature: 0.2,
            temperature_lr: 1e-3,
            warmup_steps: 1_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.temperature_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths");
        }
        if !(self.exploration_noise >= 0.0) {
            return bad("exploration_noise must be >= 0");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be > 0");
        }
        Ok(())
    }

    /// Short stable digest of the serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Losses from one learning step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature: Option<f64>,
}

/// Anything that maps observations to actions in `[-1, 1]^N`.
pub trait Agent {
    fn act(&mut self, observation: &[f64], explore: bool) -> Result<Vec<f64>, AgentError>;

    /// Feeds one transition; learners may take a gradient step.
    fn observe(&mut self, _transition: &Transition) -> Result<Option<UpdateStats>, AgentError> {
        Ok(None)
    }

    /// Digest of all learnable parameters.
    fn fingerprint(&self) -> u64;

    fn snapshot(&self) -> AgentSnapshot;
}

/// DDPG or SAC behind one type, for harness and checkpoint code.
#[derive(Debug, Clone)]
pub enum Learner {
    Ddpg(Ddpg),
    Sac(Sac),
}

impl Learner {
    pub fn new(cfg: &AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self, AgentError> {
        Ok(match cfg.algorithm {
            Algorithm::Ddpg => Learner::Ddpg(Ddpg::new(cfg.clone(), obs_dim, act_dim, seed)?),
            Algorithm::Sac => Learner::Sac(Sac::new(cfg.clone(), obs_dim, act_dim, seed)?),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Learner::Ddpg(_) => Algorithm::Ddpg,
            Learner::Sac(_) => Algorithm::Sac,
        }
    }
}

impl Agent for Learner {
    fn act(&mut self, observation: &[f64], explore: bool) -> Result<Vec<f64>, AgentError> {
        match self {
            Learner::Ddpg(a) => a.act(observation, explore),
            Learner::Sac(a) => a.act(observation, explore),
        }
    }

    fn observe(&mut self, t: &Transition) -> Result<Option<UpdateStats>, AgentError> {
        match self {
            Learner::Ddpg(a) => a.observe(t),
            Learner::Sac(a) => a.observe(t),
        }
    }

    fn fingerprint(&self) -> u64 {
        match self {
            Learner::Ddpg(a) => a.fingerprint(),
            Learner::Sac(a) => a.fingerprint(),
        }
    }

    fn snapshot(&self) -> AgentSnapshot {
        match self {
            Learner::Ddpg(a) => a.snapshot(),
            Learner::Sac(a) => a.snapshot(),
        }
    }
}

/// Rebuilds a boxed agent from a checkpoint payload.
pub fn agent_from_snapshot(snapshot: AgentSnapshot) -> Result<Box<dyn Agent + Send>, AgentError> {
    Ok(match snapshot {
        AgentSnapshot::Ddpg(s) => Box::new(Ddpg::from_snapshot(*s)?),
        AgentSnapshot::Sac(s) => Box::new(Sac::from_snapshot(*s)?),
        AgentSnapshot::Zero { action_dim } => Box::new(ZeroAgent::new(action_dim)),
        AgentSnapshot::ReachOracle(o) => Box::new(o),
    })
}

pub(crate) fn build_actor<R: Rng + ?Sized>(
    cfg: &AgentConfig,
    obs_dim: usize,
    out_dim: usize,
    output: Activation,
    rng: &mut R,
) -> Mlp {
    let mut sizes = vec![obs_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(out_dim);
    let mut net = Mlp::new(&sizes, Activation::Relu, output, rng);
    net.scale_last_layer(0.01);
    net
}

pub(crate) fn build_critic<R: Rng + ?Sized>(cfg: &AgentConfig, in_dim: usize, rng: &mut R) -> Mlp {
    let mut sizes = vec![in_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    Mlp::new(&sizes, Activation::Relu, Activation::Linear, rng)
}

/// Row-wise concatenation of two row-major matrices with the same row count.
pub(crate) fn concat_rows(a: &[f64], a_dim: usize, b: &[f64], b_dim: usize) -> Vec<f64> {
    let rows = if a_dim == 0 { b.len() / b_dim } else { a.len() / a_dim };
    let mut out = Vec::with_capacity(rows * (a_dim + b_dim));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_dim..(r + 1) * a_dim]);
        out.extend_from_slice(&b[r * b_dim..(r + 1) * b_dim]);
    }
    out
}

/// Columns `[from, from + width)` of every row.
pub(crate) fn slice_cols(m: &[f64], dim: usize, from: usize, width: usize) -> Vec<f64> {
    m.chunks_exact(dim)
        .flat_map(|row| row[from..from + width].iter().copied())
        .collect()
}

pub(crate) fn fingerprint_params<'a>(nets: impl IntoIterator<Item = &'a [f64]>) -> u64 {
    let mut h = Sha256::new();
    for params in nets {
        for p in params {
            h.update(p.to_bits().to_le_bytes());
        }
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub(crate) fn check_obs(expected: usize, obs: &[f64]) -> Result<(), AgentError> {
    if obs.len() != expected {
        return Err(AgentError::ObservationLength {
            expected,
            got: obs.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let c = AgentConfig { gamma: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = AgentConfig { tau: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = AgentConfig { batch_size: 10, buffer_capacity: 5, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_hash_is_stable() {
        let a = AgentConfig::default();
        assert_eq!(a.hash(), AgentConfig::default().hash());
        let b = AgentConfig { gamma: 0.9, ..Default::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn concat_and_slice() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [9.0, 8.0];
        let c = concat_rows(&a, 2, &b, 1);
        assert_eq!(c, vec![1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        assert_eq!(slice_cols(&c, 3, 2, 1), vec![9.0, 8.0]);
    }
}
