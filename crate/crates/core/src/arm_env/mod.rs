//! Kinematic serial-arm reacher.
//!
//! The arm is velocity-controlled: an action in `[-1, 1]^N` scales the
//! maximum joint speed, and joint angles are integrated with one Euler step
//! of length `dt`. There are no dynamics. Targets spawn uniformly in an
//! annulus (planar arms) or spherical shell (spatial arms) around the base.
//!
//! The environment is purely functional: `reset` and `step` take and return
//! [`EnvState`] values, so a `(seed, actions)` pair fully determines a rollout.

pub mod ik;
mod kinematics;

pub use kinematics::{forward_kinematics, JointAxis, Pose};

use crate::rewards::{distance, RewardError, RewardInputs, RewardSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Layout identifier of [`ArmEnv::observe`]. Checkpoints record it.
pub const OBS_LAYOUT: &str = "sin_q,cos_q,qvel_norm,p,t,t_minus_p/v1";

const MAX_TARGET_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid arm config: {0}")]
    InvalidConfig(String),
    #[error("workspace unreachable: no reachable target after {0} samples")]
    UnreachableWorkspace(usize),
    #[error("action has length {got}, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("action component {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("episode already ended at step {0}")]
    EpisodeOver(usize),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub joint_axes: Vec<JointAxis>,
    /// Meters, one per joint.
    pub link_lengths: Vec<f64>,
    /// `[low, high]` in radians, one per joint.
    pub joint_limits: Vec<[f64; 2]>,
    /// Initial angle of every joint.
    pub home_angle: f64,
    /// rad/s reached at action magnitude 1.
    pub max_joint_speed: f64,
    pub dt: f64,
    pub max_steps: usize,
    /// Success radius in meters.
    pub beta: f64,
    /// Target radius bounds as fractions of the total reach.
    pub workspace: [f64; 2],
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self::six_dof()
    }
}

impl ArmConfig {
    /// Six joints alternating z/y axes, total reach 1 m.
    pub fn six_dof() -> Self {
        let n = 6;
        Self {
            joint_axes: (0..n)
                .map(|i| if i % 2 == 0 { JointAxis::Z } else { JointAxis::Y })
                .collect(),
            link_lengths: vec![1.0 / n as f64; n],
            joint_limits: vec![[-PI, PI]; n],
            home_angle: 0.1,
            max_joint_speed: 2.0,
            dt: 0.05,
            max_steps: 50,
            beta: 0.01,
            workspace: [0.2, 0.9],
        }
    }

    /// Two z-axis joints with 0.5 m links moving in the x-y plane.
    pub fn planar_2dof() -> Self {
        Self {
            joint_axes: vec![JointAxis::Z; 2],
            link_lengths: vec![0.5, 0.5],
            joint_limits: vec![[-PI, PI]; 2],
            ..Self::six_dof()
        }
    }

    pub fn joint_count(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn obs_len(&self) -> usize {
        3 * self.joint_count() + 9
    }

    pub fn total_reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Smallest distance from the base the tip can reach with unrestricted joints.
    pub fn inner_reach(&self) -> f64 {
        let longest = self.link_lengths.iter().cloned().fold(0.0, f64::max);
        (2.0 * longest - self.total_reach()).max(0.0)
    }

    /// True when every joint turns about z, so the arm stays in the x-y plane.
    pub fn is_planar(&self) -> bool {
        self.joint_axes.iter().all(|a| *a == JointAxis::Z)
    }

    /// Whether some posture within the joint limits puts the tip at `target`.
    ///
    /// Planar arms whose joints turn fully are decided by the radial bounds
    /// alone; other arms additionally need an inverse-kinematics solution.
    pub fn can_reach(&self, target: [f64; 3]) -> bool {
        let r = (target[0] * target[0] + target[1] * target[1] + target[2] * target[2]).sqrt();
        if r > self.total_reach() || r < self.inner_reach() {
            return false;
        }
        let full_turn = self.joint_limits.iter().all(|[lo, hi]| *lo <= -PI && *hi >= PI);
        if self.is_planar() {
            return target[2] == 0.0 && (full_turn || ik::find_solution(self, &self.home_posture(), target).is_some());
        }
        ik::find_solution(self, &self.home_posture(), target).is_some()
    }

    pub fn home_posture(&self) -> Vec<f64> {
        self.joint_limits
            .iter()
            .map(|[lo, hi]| self.home_angle.clamp(*lo, *hi))
            .collect()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        let n = self.joint_count();
        if n < 2 {
            return bad(format!("need at least 2 joints, got {n}"));
        }
        if self.joint_axes.len() != n || self.joint_limits.len() != n {
            return bad("joint_axes, link_lengths and joint_limits must have equal length".into());
        }
        if self.link_lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("link lengths must be positive".into());
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) {
            return bad("each joint limit needs low < high".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0".into());
        }
        if !(self.max_joint_speed > 0.0 && self.max_joint_speed.is_finite()) {
            return bad("max_joint_speed must be > 0".into());
        }
        if self.max_steps < 1 {
            return bad("max_steps must be >= 1".into());
        }
        let [lo, hi] = self.workspace;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return bad(format!("workspace [{lo}, {hi}] is not an interval of non-negative fractions"));
        }
        let min_radius = lo * self.total_reach();
        if !(self.beta > 0.0 && self.beta < min_radius) {
            return bad(format!(
                "beta must satisfy 0 < beta < min workspace radius ({min_radius})"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub joint_angles: Vec<f64>,
    /// Velocities commanded over the last step, after limit handling.
    pub joint_velocities: Vec<f64>,
    pub ee_pose: Pose,
    pub target: [f64; 3],
    pub step_index: usize,
    pub d_pt: f64,
}

/// One step of agent experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
    pub success: bool,
    pub info: RewardInputs,
}

#[derive(Debug, Clone)]
pub struct ArmEnv {
    cfg: ArmConfig,
}

impl ArmEnv {
    pub fn new(cfg: ArmConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ArmConfig {
        &self.cfg
    }

    pub fn forward_kinematics(&self, joint_angles: &[f64]) -> Pose {
        forward_kinematics(joint_angles, &self.cfg.joint_axes, &self.cfg.link_lengths)
    }

    /// Home posture with a fresh target drawn from `seed`.
    pub fn reset(&self, seed: u64) -> Result<EnvState, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = self.sample_target(&mut rng)?;
        Ok(self.state_at(self.cfg.home_posture(), vec![0.0; self.cfg.joint_count()], target, 0))
    }

    /// Builds a state at the given joint angles, recomputing pose and distance.
    pub fn state_at(
        &self,
        joint_angles: Vec<f64>,
        joint_velocities: Vec<f64>,
        target: [f64; 3],
        step_index: usize,
    ) -> EnvState {
        let ee_pose = self.forward_kinematics(&joint_angles);
        let d_pt = distance(&ee_pose.position, &target);
        EnvState {
            joint_angles,
            joint_velocities,
            ee_pose,
            target,
            step_index,
            d_pt,
        }
    }

    fn sample_target(&self, rng: &mut ChaCha8Rng) -> Result<[f64; 3], EnvError> {
        let reach = self.cfg.total_reach();
        let r_min = self.cfg.workspace[0] * reach;
        let r_max = self.cfg.workspace[1] * reach;
        let planar = self.cfg.is_planar();
        let dim = if planar { 2 } else { 3 };
        for _ in 0..MAX_TARGET_REJECTIONS {
            // Radius with density proportional to r^(dim-1): uniform over the region.
            let u: f64 = rng.random();
            let (a, b) = (r_min.powi(dim), r_max.powi(dim));
            let r = (a + u * (b - a)).powf(1.0 / dim as f64).clamp(r_min, r_max);
            let dir = if planar {
                let theta = rng.random_range(-PI..PI);
                [theta.cos(), theta.sin(), 0.0]
            } else {
                let g: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if n < 1e-12 {
                    continue;
                }
                [g[0] / n, g[1] / n, g[2] / n]
            };
            let target = [r * dir[0], r * dir[1], r * dir[2]];
            if self.cfg.can_reach(target) {
                return Ok(target);
            }
        }
        Err(EnvError::UnreachableWorkspace(MAX_TARGET_REJECTIONS))
    }

    /// Kinematic update only: integrates the action and advances the step counter.
    pub fn advance(&self, state: &EnvState, action: &[f64]) -> Result<EnvState, EnvError> {
        let n = self.cfg.joint_count();
        if action.len() != n {
            return Err(EnvError::ActionLength {
                expected: n,
                got: action.len(),
            });
        }
        if let Some(index) = action.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction { index });
        }
        if state.step_index >= self.cfg.max_steps {
            return Err(EnvError::EpisodeOver(state.step_index));
        }
        let mut angles = state.joint_angles.clone();
        let mut velocities = Vec::with_capacity(n);
        for (i, (q, a)) in angles.iter_mut().zip(action).enumerate() {
            let mut v = a.clamp(-1.0, 1.0) * self.cfg.max_joint_speed;
            let [lo, hi] = self.cfg.joint_limits[i];
            let next = *q + v * self.cfg.dt;
            if next < lo || next > hi {
                // Stop at the limit; the joint did not move at the commanded speed.
                *q = next.clamp(lo, hi);
                v = 0.0;
            } else {
                *q = next;
            }
            velocities.push(v);
        }
        Ok(self.state_at(angles, velocities, state.target, state.step_index + 1))
    }

    pub fn is_success(&self, state: &EnvState) -> bool {
        state.d_pt < self.cfg.beta
    }

    pub fn is_done(&self, state: &EnvState) -> bool {
        self.is_success(state) || state.step_index >= self.cfg.max_steps
    }

    /// Reward inputs for the move `prev -> next`.
    pub fn reward_inputs(&self, prev: &EnvState, next: &EnvState) -> RewardInputs {
        let p0 = prev.ee_pose.position;
        let p1 = next.ee_pose.position;
        RewardInputs {
            d_pt: next.d_pt,
            ee_position: p1,
            target: next.target,
            ee_quaternion: next.ee_pose.orientation,
            displacement: [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]],
            joint_velocities: next.joint_velocities.clone(),
            dt: self.cfg.dt,
            joint_count: self.cfg.joint_count(),
            task_done: self.is_success(next),
        }
    }

    /// Advances one control period and scores the move with `reward`,
    /// adding the success bonus when the target is reached.
    pub fn step(
        &self,
        state: &EnvState,
        action: &[f64],
        reward: &RewardSpec,
    ) -> Result<(EnvState, Transition), EnvError> {
        let next = self.advance(state, action)?;
        let info = self.reward_inputs(state, &next);
        let success = info.task_done;
        let mut r = reward.evaluate(&info)?;
        if success {
            r += reward.config.success_bonus;
        }
        let transition = Transition {
            observation: self.observe(state),
            action: action.iter().map(|a| a.clamp(-1.0, 1.0)).collect(),
            reward: r,
            next_observation: self.observe(&next),
            done: success || next.step_index >= self.cfg.max_steps,
            success,
            info,
        };
        Ok((next, transition))
    }

    /// `[sin q, cos q, qdot / max_speed, P, T, T - P]`, length `3N + 9`.
    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.cfg.obs_len());
        obs.extend(state.joint_angles.iter().map(|q| q.sin()));
        obs.extend(state.joint_angles.iter().map(|q| q.cos()));
        obs.extend(
            state
                .joint_velocities
                .iter()
                .map(|v| v / self.cfg.max_joint_speed),
        );
        let p = state.ee_pose.position;
        let t = state.target;
        obs.extend_from_slice(&p);
        obs.extend_from_slice(&t);
        obs.extend((0..3).map(|i| t[i] - p[i]));
        obs
    }
}
