//! Experiment engine: the episode loop, convergence statistics, evaluation
//! and comparison tables.
//!
//! Run directories contain `episodes.csv`, `summary.json`, `checkpoint.json`
//! and, with periodic evaluation enabled, `evals.csv`.

mod compare;
mod io;
mod metrics;

pub use compare::{compare, percent_faster, truncate_tenths, ComparisonTable, DeltaLine, TableRow};
pub use io::{read_episodes_csv, read_summary, write_episodes_csv, write_summary, EvalRow};
pub use metrics::{
    detect_convergence, episode_reward, moving_average, summarize, ConvergenceRule,
    StdevDenominator, WindowStats,
};

use crate::agents::{Agent, AgentConfig, AgentError, Checkpoint, Learner};
use crate::arm_env::{ArmConfig, ArmEnv, EnvError};
use crate::rewards::{RewardKind, RewardSpec};
use crate::seed::{derive_seed, SeedDomain};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

pub const EPISODES_CSV: &str = "episodes.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const EVALS_CSV: &str = "evals.csv";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of training episodes.
    pub episodes: usize,
    /// Step cap per episode; overrides the arm's `max_steps`.
    pub steps: usize,
    pub seed: u64,
    pub agent: AgentConfig,
    pub arm: ArmConfig,
    pub reward: RewardSpec,
    pub eval_trials: usize,
    /// Evaluate and checkpoint every this many episodes; 0 disables.
    pub eval_interval: usize,
    pub convergence: ConvergenceRule,
    pub stdev_denominator: StdevDenominator,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            steps: 50,
            seed: 0,
            agent: AgentConfig::default(),
            arm: ArmConfig::default(),
            reward: RewardSpec::new(RewardKind::Sar),
            eval_trials: 500,
            eval_interval: 0,
            convergence: ConvergenceRule::default(),
            stdev_denominator: StdevDenominator::Window,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes < 1 || self.steps < 1 || self.eval_trials < 1 {
            return Err(HarnessError::InvalidInput(
                "episodes, steps and eval_trials must all be >= 1".into(),
            ));
        }
        if !(self.convergence.fraction > 0.0 && self.convergence.fraction <= 1.0) || self.convergence.window == 0 {
            return Err(HarnessError::InvalidInput(
                "convergence needs window >= 1 and fraction in (0, 1]".into(),
            ));
        }
        self.effective_arm().validate()?;
        if self.reward.config.beta != self.arm.beta {
            return Err(HarnessError::InvalidInput(format!(
                "reward beta {} differs from arm beta {}",
                self.reward.config.beta, self.arm.beta
            )));
        }
        self.agent.validate()?;
        self.reward
            .config
            .validate()
            .map_err(|e| HarnessError::InvalidInput(e.to_string()))?;
        Ok(())
    }

    pub fn effective_arm(&self) -> ArmConfig {
        ArmConfig {
            max_steps: self.steps,
            ..self.arm.clone()
        }
    }

    /// Digest of the whole configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    pub reward: f64,
    pub steps: usize,
    pub success: bool,
    pub final_d_pt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub trials: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub reward_kind: String,
    pub seed: u64,
    pub episodes: usize,
    /// Convergence episode, `None` when not converged.
    pub e_start: Option<usize>,
    /// First episode of the statistics window. Equals `e_start` when
    /// converged; otherwise the start of the final plateau window.
    pub window_start: usize,
    pub mean_reward: f64,
    pub v_stdev: Option<f64>,
    pub mean_steps: f64,
    pub eval: Option<EvalResult>,
    /// Set when training aborted, e.g. on a non-finite loss.
    pub failed: Option<String>,
    pub config_hash: String,
}

impl RunSummary {
    pub fn converged(&self) -> bool {
        self.e_start.is_some()
    }

    /// Builds the summary from finished (or partial) episode records.
    pub fn from_records(
        config: &RunConfig,
        algorithm: &str,
        records: &[EpisodeRecord],
        eval: Option<EvalResult>,
        failed: Option<String>,
    ) -> Result<Self, HarnessError> {
        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let rule = ConvergenceRule {
            window: config.convergence.window.min(rewards.len().max(1)),
            ..config.convergence
        };
        let (e_start, window_start) = if records.is_empty() {
            (None, 1)
        } else {
            match detect_convergence(&rewards, &rule)? {
                Some(e) => (Some(e), e),
                None => (None, records.len() + 1 - rule.plateau_len(records.len())),
            }
        };
        let stats = if records.is_empty() {
            WindowStats {
                window_len: 0,
                mean_reward: 0.0,
                v_stdev: None,
                mean_steps: 0.0,
            }
        } else {
            summarize(records, window_start, config.stdev_denominator)?
        };
        Ok(Self {
            algorithm: algorithm.to_string(),
            reward_kind: config.reward.kind.to_string(),
            seed: config.seed,
            episodes: records.len(),
            e_start,
            window_start,
            mean_reward: stats.mean_reward,
            v_stdev: stats.v_stdev,
            mean_steps: stats.mean_steps,
            eval,
            failed,
            config_hash: config.hash(),
        })
    }
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunOutcome<A> {
    pub summary: RunSummary,
    pub records: Vec<EpisodeRecord>,
    pub agent: A,
}

/// Trains a fresh DDPG or SAC learner as configured.
pub fn train(config: &RunConfig) -> Result<RunOutcome<Learner>, HarnessError> {
    train_observed(config, |_| {})
}

/// [`train`] with a callback receiving each episode record as it completes.
pub fn train_observed(
    config: &RunConfig,
    on_episode: impl FnMut(&EpisodeRecord),
) -> Result<RunOutcome<Learner>, HarnessError> {
    config.validate()?;
    let arm = config.effective_arm();
    let agent_seed = derive_seed(config.seed, SeedDomain::Agent, 0);
    let learner = Learner::new(&config.agent, arm.obs_len(), arm.joint_count(), agent_seed)?;
    let algorithm = config.agent.algorithm.to_string();
    train_agent(config, learner, &algorithm, on_episode)
}

/// The episode loop for any agent, learning or scripted.
pub fn train_agent<A: Agent>(
    config: &RunConfig,
    mut agent: A,
    algorithm: &str,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<RunOutcome<A>, HarnessError> {
    config.validate()?;
    let env = ArmEnv::new(config.effective_arm())?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let mut records = Vec::with_capacity(config.episodes);
    let mut evals = Vec::new();
    let mut failed = None;

    'episodes: for episode in 1..=config.episodes {
        let mut state = env.reset(derive_seed(config.seed, SeedDomain::TrainEpisode, episode as u64))?;
        let mut rewards = Vec::with_capacity(config.steps);
        loop {
            let obs = env.observe(&state);
            let action = match agent.act(&obs, true) {
                Ok(a) => a,
                Err(e @ AgentError::Diverged { .. }) => {
                    failed = Some(e.to_string());
                    break 'episodes;
                }
                Err(e) => return Err(e.into()),
            };
            let (next, transition) = env.step(&state, &action, &config.reward)?;
            if !transition.reward.is_finite() {
                failed = Some(format!("non-finite reward in episode {episode}"));
                break 'episodes;
            }
            rewards.push(transition.reward);
            match agent.observe(&transition) {
                Ok(_) => {}
                Err(e @ AgentError::Diverged { .. }) | Err(e @ AgentError::Neuro(_)) => {
                    failed = Some(e.to_string());
                    break 'episodes;
                }
                Err(e) => return Err(e.into()),
            }
            state = next;
            if transition.done {
                let record = EpisodeRecord {
                    episode,
                    reward: episode_reward(&rewards)?,
                    steps: rewards.len(),
                    success: transition.success,
                    final_d_pt: state.d_pt,
                };
                on_episode(&record);
                records.push(record);
                break;
            }
        }

        if config.eval_interval > 0 && episode % config.eval_interval == 0 && episode < config.episodes {
            let r = evaluate(&mut agent, &config.effective_arm(), &config.reward, config.seed, config.eval_trials)?;
            evals.push(EvalRow::new(episode, &r));
            if let Some(dir) = &config.output_dir {
                io::write_evals_csv(&dir.join(EVALS_CSV), &evals)?;
                save_checkpoint(config, &agent, dir)?;
            }
        }
    }

    let eval = if failed.is_none() {
        Some(evaluate(&mut agent, &config.effective_arm(), &config.reward, config.seed, config.eval_trials)?)
    } else {
        None
    };
    let summary = RunSummary::from_records(config, algorithm, &records, eval, failed)?;
    if let Some(dir) = &config.output_dir {
        write_episodes_csv(&dir.join(EPISODES_CSV), &records)?;
        write_summary(&dir.join(SUMMARY_JSON), &summary)?;
        save_checkpoint(config, &agent, dir)?;
        if let Some(e) = eval {
            evals.push(EvalRow::new(config.episodes, &e));
            io::write_evals_csv(&dir.join(EVALS_CSV), &evals)?;
        }
    }
    Ok(RunOutcome {
        summary,
        records,
        agent,
    })
}

fn save_checkpoint<A: Agent>(config: &RunConfig, agent: &A, dir: &std::path::Path) -> Result<(), HarnessError> {
    let ckpt = Checkpoint::new(config.effective_arm(), config.reward.clone(), config.seed, agent);
    ckpt.save(&dir.join(CHECKPOINT_JSON))?;
    Ok(())
}

/// Greedy rollouts on `trials` targets drawn from seeds disjoint from training.
pub fn evaluate<A: Agent + ?Sized>(
    agent: &mut A,
    arm: &ArmConfig,
    reward: &RewardSpec,
    seed: u64,
    trials: usize,
) -> Result<EvalResult, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::InvalidInput("evaluation needs at least one trial".into()));
    }
    let env = ArmEnv::new(arm.clone())?;
    let (mut successes, mut reward_sum, mut steps_sum) = (0usize, 0.0, 0usize);
    for trial in 0..trials {
        let mut state = env.reset(derive_seed(seed, SeedDomain::EvalTrial, trial as u64))?;
        let mut total = 0.0;
        loop {
            let action = agent.act(&env.observe(&state), false)?;
            let (next, t) = env.step(&state, &action, reward)?;
            total += t.reward;
            state = next;
            if t.done {
                successes += usize::from(t.success);
                break;
            }
        }
        reward_sum += total;
        steps_sum += state.step_index;
    }
    let n = trials as f64;
    Ok(EvalResult {
        trials,
        success_rate: successes as f64 / n,
        mean_reward: reward_sum / n,
        mean_steps: steps_sum as f64 / n,
    })
}
