//! Experiment files.
//!
//! ```toml
//! [run]
//! name = "sar-vs-stride"
//! episodes = 3000
//! steps = 50
//! seed = [1, 2, 3]            # scalar or list
//! algorithm = "ddpg"          # scalar or list
//! reward = ["sar", "stride"]  # scalar or list
//! eval_trials = 200
//!
//! [env]
//! preset = "planar_2dof"      # or "six_dof"
//! max_joint_speed = 2.0
//!
//! [agent]
//! hidden = [64, 64]
//!
//! [reward]
//! direction_mode = "quaternion_axis"
//! ```
//!
//! Lists in `[run]` expand to one run per combination. Unknown keys are errors.

use serde::de::{self, IntoDeserializer, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer};
use stagerl_core::arm_env::JointAxis;
use stagerl_core::harness::{ConvergenceRule, StdevDenominator};
use stagerl_core::rewards::DirectionMode;
use stagerl_core::{AgentConfig, Algorithm, ArmConfig, RewardConfig, RewardKind, RewardSpec, RunConfig};
use std::fmt;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct OneOrMany<T>(pub Vec<T>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for OneOrMany<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = OneOrMany<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a value or a list of values")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(|t| OneOrMany(vec![t]))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(|t| OneOrMany(vec![t]))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                T::deserialize(v.into_deserializer()).map(|t| OneOrMany(vec![t]))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(t) = seq.next_element()? {
                    out.push(t);
                }
                if out.is_empty() {
                    return Err(de::Error::invalid_length(0, &"at least one value"));
                }
                Ok(OneOrMany(out))
            }
        }

        d.deserialize_any(V(PhantomData))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    SixDof,
    #[serde(rename = "planar_2dof")]
    Planar2dof,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub name: String,
    pub episodes: usize,
    pub steps: usize,
    #[serde(alias = "seeds")]
    pub seed: OneOrMany<u64>,
    pub algorithm: OneOrMany<Algorithm>,
    pub reward: OneOrMany<RewardKind>,
    pub eval_trials: usize,
    pub eval_interval: usize,
    pub convergence_window: usize,
    pub convergence_fraction: f64,
    pub stdev_denominator: StdevDenominator,
}

impl Default for RunSection {
    fn default() -> Self {
        let rc = RunConfig::default();
        Self {
            name: "experiment".into(),
            episodes: rc.episodes,
            steps: rc.steps,
            seed: OneOrMany(vec![0]),
            algorithm: OneOrMany(vec![Algorithm::Ddpg]),
            reward: OneOrMany(vec![RewardKind::Sar]),
            eval_trials: rc.eval_trials,
            eval_interval: rc.eval_interval,
            convergence_window: rc.convergence.window,
            convergence_fraction: rc.convergence.fraction,
            stdev_denominator: rc.stdev_denominator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub preset: Preset,
    pub joint_axes: Option<Vec<JointAxis>>,
    pub link_lengths: Option<Vec<f64>>,
    pub joint_limits: Option<Vec<[f64; 2]>>,
    pub home_angle: Option<f64>,
    pub max_joint_speed: Option<f64>,
    pub dt: Option<f64>,
    pub beta: Option<f64>,
    pub workspace: Option<[f64; 2]>,
}

impl EnvSection {
    pub fn arm(&self) -> ArmConfig {
        let mut arm = match self.preset {
            Preset::SixDof => ArmConfig::six_dof(),
            Preset::Planar2dof => ArmConfig::planar_2dof(),
        };
        if let Some(v) = &self.joint_axes {
            arm.joint_axes = v.clone();
        }
        if let Some(v) = &self.link_lengths {
            arm.link_lengths = v.clone();
        }
        if let Some(v) = &self.joint_limits {
            arm.joint_limits = v.clone();
        }
        arm.home_angle = self.home_angle.unwrap_or(arm.home_angle);
        arm.max_joint_speed = self.max_joint_speed.unwrap_or(arm.max_joint_speed);
        arm.dt = self.dt.unwrap_or(arm.dt);
        arm.beta = self.beta.unwrap_or(arm.beta);
        arm.workspace = self.workspace.unwrap_or(arm.workspace);
        arm
    }
}

/// Reward constants. The success radius comes from `[env] beta`.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub har_boundary: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub direction_mode: Option<DirectionMode>,
    pub success_bonus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentFile {
    pub run: RunSection,
    pub env: EnvSection,
    pub agent: AgentConfig,
    pub reward: RewardSection,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    /// Directory name below `<output root>/<experiment name>/`.
    pub label: String,
    pub config: RunConfig,
}

impl ExperimentFile {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, overrides).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let has_overrides = !overrides.is_empty();
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if table
            .get("agent")
            .and_then(|a| a.as_table())
            .is_some_and(|a| a.contains_key("algorithm"))
        {
            return Err(ConfigError::Parse(
                "key `agent.algorithm` is not allowed; set `algorithm` under [run]".into(),
            ));
        }
        // Re-parse from text when possible so errors point at source lines.
        let file: ExperimentFile = if has_overrides {
            ExperimentFile::deserialize(toml::Value::Table(table))
                .map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        file.plan()?;
        Ok(file)
    }

    /// Expands the grid into run configurations, validating each.
    pub fn plan(&self) -> Result<Vec<PlannedRun>, ConfigError> {
        let arm = self.env.arm();
        let defaults = RewardConfig::default();
        let reward_config = RewardConfig {
            beta: arm.beta,
            har_boundary: self.reward.har_boundary.unwrap_or(defaults.har_boundary),
            sigma1: self.reward.sigma1.unwrap_or(defaults.sigma1),
            sigma2: self.reward.sigma2.unwrap_or(defaults.sigma2),
            direction_mode: self.reward.direction_mode.unwrap_or(defaults.direction_mode),
            success_bonus: self.reward.success_bonus.unwrap_or(defaults.success_bonus),
        };
        let mut runs = Vec::new();
        for &algorithm in &self.run.algorithm.0 {
            for &kind in &self.run.reward.0 {
                for &seed in &self.run.seed.0 {
                    let config = RunConfig {
                        episodes: self.run.episodes,
                        steps: self.run.steps,
                        seed,
                        agent: AgentConfig {
                            algorithm,
                            ..self.agent.clone()
                        },
                        arm: arm.clone(),
                        reward: RewardSpec {
                            kind,
                            config: reward_config.clone(),
                        },
                        eval_trials: self.run.eval_trials,
                        eval_interval: self.run.eval_interval,
                        convergence: ConvergenceRule {
                            window: self.run.convergence_window,
                            fraction: self.run.convergence_fraction,
                        },
                        stdev_denominator: self.run.stdev_denominator,
                        output_dir: None,
                    };
                    config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    if config.episodes < config.convergence.window {
                        return Err(ConfigError::Invalid(format!(
                            "episodes ({}) must be at least convergence_window ({})",
                            config.episodes, config.convergence.window
                        )));
                    }
                    runs.push(PlannedRun {
                        label: format!("{algorithm}-{kind}-seed{seed}"),
                        config,
                    });
                }
            }
        }
        Ok(runs)
    }
}

/// Applies `key=value`; bare keys address `[run]`, dotted keys any section.
/// The value is read as a TOML value, falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.len() == 1 {
        parts.insert(0, "run");
    }
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(format!("{spec}: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[run]
name = "t"
episodes = 300
seed = [1, 2]
reward = ["sar", "stride"]

[env]
preset = "planar_2dof"
"#;

    #[test]
    fn grid_expands() {
        let f = ExperimentFile::parse(SMALL, &[]).unwrap();
        let runs = f.plan().unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[0].label, "ddpg-sar-seed1");
        assert_eq!(runs[3].label, "ddpg-stride-seed2");
        assert_eq!(runs[0].config.arm.joint_count(), 2);
    }

    #[test]
    fn scalars_are_accepted() {
        let f = ExperimentFile::parse("[run]\nseed = 5\nalgorithm = \"sac\"\nreward = \"har\"\n", &[]).unwrap();
        let runs = f.plan().unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].config.seed, 5);
        assert_eq!(runs[0].config.agent.algorithm, Algorithm::Sac);
        assert_eq!(runs[0].config.reward.kind, RewardKind::Har);
    }

    #[test]
    fn misspelled_reward_names_the_key() {
        let err = ExperimentFile::parse("[run]\nreward = \"postur\"\n", &[]).unwrap_err().to_string();
        assert!(err.contains("postur"), "{err}");
        assert!(err.contains("reward"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[run]\nepisode = 3\n", "[envv]\n", "[agent]\ngama = 0.9\n", "[reward]\nbeta = 0.1\n"] {
            assert!(ExperimentFile::parse(text, &[]).is_err(), "{text}");
        }
        assert!(ExperimentFile::parse("[agent]\nalgorithm = \"sac\"\n", &[]).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(ExperimentFile::parse("[agent]\ngamma = 1.5\n", &[]).is_err());
        assert!(ExperimentFile::parse("[env]\ndt = -1.0\n", &[]).is_err());
        assert!(ExperimentFile::parse("[run]\neval_trials = 0\n", &[]).is_err());
    }

    #[test]
    fn overrides() {
        let over = |o: &[&str]| {
            let o: Vec<String> = o.iter().map(|s| s.to_string()).collect();
            ExperimentFile::parse(SMALL, &o)
        };
        let f = over(&["episodes=400", "agent.gamma=0.9", "reward=sar", "env.max_joint_speed=1.5"]).unwrap();
        let runs = f.plan().unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].config.episodes, 400);
        assert_eq!(runs[0].config.agent.gamma, 0.9);
        assert_eq!(runs[0].config.arm.max_joint_speed, 1.5);
        assert!(over(&["episodes"]).is_err());
        assert!(over(&["agent.nope=1"]).is_err());
    }
}
