//! Versioned JSON checkpoints.
//!
//! A checkpoint carries everything needed to evaluate or resume an agent:
//! the arm and reward setup, the observation layout the networks expect,
//! network parameters, optimizer moments and the RNG position. Replay
//! buffers are not stored.

use super::{Agent, AgentConfig, AgentError, ReachOracle};
use crate::arm_env::{ArmConfig, OBS_LAYOUT};
use crate::neuro::{Adam, Mlp};
use crate::rewards::RewardSpec;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, AgentError> {
        let bad = || AgentError::Checkpoint("malformed rng state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgSnapshot {
    pub config: AgentConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub rng: RngState,
    pub steps: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacSnapshot {
    pub config: AgentConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub log_alpha: f64,
    pub alpha_opt: Adam,
    pub rng: RngState,
    pub steps: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSnapshot {
    Ddpg(Box<DdpgSnapshot>),
    Sac(Box<SacSnapshot>),
    Zero { action_dim: usize },
    ReachOracle(ReachOracle),
}

impl AgentSnapshot {
    pub fn config_hash(&self) -> Option<String> {
        match self {
            AgentSnapshot::Ddpg(s) => Some(s.config.hash()),
            AgentSnapshot::Sac(s) => Some(s.config.hash()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub obs_layout: String,
    pub arm: ArmConfig,
    pub reward: RewardSpec,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub agent: AgentSnapshot,
}

impl Checkpoint {
    pub fn new(arm: ArmConfig, reward: RewardSpec, seed: u64, agent: &dyn Agent) -> Self {
        let agent = agent.snapshot();
        Self {
            version: CHECKPOINT_VERSION,
            obs_layout: OBS_LAYOUT.to_string(),
            config_hash: agent.config_hash(),
            arm,
            reward,
            seed,
            agent,
        }
    }

    /// Writes to a sibling temp file then renames, so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let io = |e: std::io::Error| AgentError::Checkpoint(format!("{}: {e}", path.display()));
        let json = serde_json::to_vec(self).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&json).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let bytes = fs::read(path)
            .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, AgentError> {
        let ckpt: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| AgentError::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.obs_layout != OBS_LAYOUT {
            return Err(AgentError::Checkpoint(format!(
                "observation layout `{}` does not match this build (`{OBS_LAYOUT}`)",
                ckpt.obs_layout
            )));
        }
        Ok(ckpt)
    }

    pub fn into_agent(self) -> Result<Box<dyn Agent + Send>, AgentError> {
        super::agent_from_snapshot(self.agent)
    }
}
