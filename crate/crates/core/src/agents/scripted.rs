use super::checkpoint::AgentSnapshot;
use super::{check_obs, Agent, AgentError};
use crate::arm_env::{ik, ArmConfig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Always outputs zero velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroAgent {
    action_dim: usize,
}

impl ZeroAgent {
    pub fn new(action_dim: usize) -> Self {
        Self { action_dim }
    }
}

impl Agent for ZeroAgent {
    fn act(&mut self, _observation: &[f64], _explore: bool) -> Result<Vec<f64>, AgentError> {
        Ok(vec![0.0; self.action_dim])
    }

    fn fingerprint(&self) -> u64 {
        0
    }

    fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot::Zero {
            action_dim: self.action_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Solve inverse kinematics once per target and move every joint
    /// straight toward the nearest solution at full speed.
    #[default]
    Joint,
    /// Move the tip along the straight line `T - P`, at most `step_length`
    /// meters per step. Fails when that line leaves the dexterous workspace.
    Cartesian,
}

/// Kinematic controller built from the joint angles and `T - P` in the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachOracle {
    pub arm: ArmConfig,
    pub mode: OracleMode,
    pub step_length: f64,
    pub damping: f64,
    #[serde(skip)]
    plan: Option<Plan>,
}

/// Joint goal computed for one target.
#[derive(Debug, Clone, PartialEq)]
struct Plan {
    target: [f64; 3],
    goal: Option<Vec<f64>>,
}

impl ReachOracle {
    pub fn new(arm: ArmConfig) -> Self {
        Self {
            arm,
            mode: OracleMode::Joint,
            step_length: 0.05,
            damping: 1e-3,
            plan: None,
        }
    }

    pub fn cartesian(arm: ArmConfig) -> Self {
        Self {
            mode: OracleMode::Cartesian,
            ..Self::new(arm)
        }
    }

    /// The goal is solved once per target and reused while the target is unchanged.
    fn goal_for(&mut self, q: &[f64], target: [f64; 3]) -> Option<Vec<f64>> {
        if self.plan.as_ref().is_none_or(|p| p.target != target) {
            self.plan = Some(Plan {
                target,
                goal: ik::nearest_solution(&self.arm, q, target),
            });
        }
        self.plan.as_ref().and_then(|p| p.goal.clone())
    }

    fn decode(&self, observation: &[f64]) -> (Vec<f64>, [f64; 3], [f64; 3]) {
        let n = self.arm.joint_count();
        let q = (0..n).map(|i| observation[i].atan2(observation[n + i])).collect();
        let p = [observation[3 * n], observation[3 * n + 1], observation[3 * n + 2]];
        let t = [observation[3 * n + 3], observation[3 * n + 4], observation[3 * n + 5]];
        (q, p, t)
    }
}

fn normalise_peak(mut action: Vec<f64>) -> Vec<f64> {
    let peak = action.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if peak > 1.0 {
        action.iter_mut().for_each(|a| *a /= peak);
    }
    action
}

impl Agent for ReachOracle {
    fn act(&mut self, observation: &[f64], _explore: bool) -> Result<Vec<f64>, AgentError> {
        check_obs(self.arm.obs_len(), observation)?;
        let (q, p, t) = self.decode(observation);
        let per_action = self.arm.max_joint_speed * self.arm.dt;
        let n = q.len();
        let dq = match self.mode {
            OracleMode::Joint => match self.goal_for(&q, t) {
                Some(goal) => goal.iter().zip(&q).map(|(g, c)| g - c).collect(),
                None => vec![0.0; n],
            },
            OracleMode::Cartesian => {
                let mut dx = Vector3::new(t[0] - p[0], t[1] - p[1], t[2] - p[2]);
                let dist = dx.norm();
                if dist > self.step_length {
                    dx *= self.step_length / dist;
                }
                let (_, cols) = ik::tip_and_jacobian(&self.arm, &q);
                ik::dls_step(&cols, &dx, self.damping)
                    .ok_or_else(|| AgentError::InvalidConfig("singular damped Jacobian".into()))?
            }
        };
        Ok(normalise_peak(dq.into_iter().map(|d| d / per_action).collect()))
    }

    fn fingerprint(&self) -> u64 {
        0
    }

    fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot::ReachOracle(self.clone())
    }
}
