//! Dense shaping rewards for reaching tasks.
//!
//! Every function here is pure. The success bonus granted when an episode
//! ends at the target is owned by the environment step, not by these terms,
//! so the values stay comparable across reward kinds.
//!
//! Quaternions are scalar-last `(x, y, z, w)` throughout.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

/// Below this, `sin(acos(w))` is treated as zero and the rotation axis as undefined.
pub const AXIS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("expected direction is the zero vector (end-effector sits on the target)")]
    ZeroExpectedDirection,
    #[error("cannot measure an angle against a zero vector")]
    ZeroVector,
    #[error("step displacement is zero; no motion direction")]
    ZeroDisplacement,
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

/// Snapshot of the kinematic facts every reward consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub d_pt: f64,
    pub ee_position: [f64; 3],
    pub target: [f64; 3],
    pub ee_quaternion: [f64; 4],
    /// End-effector motion over the last step.
    pub displacement: [f64; 3],
    pub joint_velocities: Vec<f64>,
    pub dt: f64,
    pub joint_count: usize,
    pub task_done: bool,
}

impl RewardInputs {
    /// Builds inputs from a pose, target and joint velocities, computing `d_pt`.
    pub fn new(
        ee_position: [f64; 3],
        ee_quaternion: [f64; 4],
        target: [f64; 3],
        displacement: [f64; 3],
        joint_velocities: Vec<f64>,
        dt: f64,
        beta: f64,
    ) -> Self {
        let d_pt = distance(&ee_position, &target);
        let joint_count = joint_velocities.len();
        Self {
            d_pt,
            ee_position,
            target,
            ee_quaternion,
            displacement,
            joint_velocities,
            dt,
            joint_count,
            task_done: d_pt < beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Rotation axis of the end-effector orientation quaternion.
    #[default]
    QuaternionAxis,
    /// The actual end-effector displacement over the step.
    Displacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Sparse 1/0 task-done reward.
    Basic,
    Position,
    Posture,
    Stride,
    /// Hard switch between posture (far) and stride (near).
    Har,
    /// Soft distance-weighted blend of stride and posture.
    Sar,
}

impl RewardKind {
    pub const ALL: [RewardKind; 6] = [
        RewardKind::Basic,
        RewardKind::Position,
        RewardKind::Posture,
        RewardKind::Stride,
        RewardKind::Har,
        RewardKind::Sar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Basic => "basic",
            RewardKind::Position => "position",
            RewardKind::Posture => "posture",
            RewardKind::Stride => "stride",
            RewardKind::Har => "har",
            RewardKind::Sar => "sar",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RewardKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown reward kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Success radius in meters.
    pub beta: f64,
    /// Distance separating the fast-approach and slow-adjust areas for HAR.
    pub har_boundary: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub direction_mode: DirectionMode,
    pub success_bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: 0.01,
            har_boundary: 0.5,
            sigma1: 1.0,
            sigma2: 1.0,
            direction_mode: DirectionMode::QuaternionAxis,
            success_bonus: 20.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::InvalidConfig(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be > 0");
        }
        if !(self.har_boundary > self.beta && self.har_boundary.is_finite()) {
            return bad("har_boundary must exceed beta");
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return bad("sigma1 and sigma2 must be > 0");
        }
        if !self.success_bonus.is_finite() {
            return bad("success_bonus must be finite");
        }
        Ok(())
    }
}

/// Which reward to evaluate, and with what constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    #[serde(flatten)]
    pub config: RewardConfig,
}

impl RewardSpec {
    pub fn new(kind: RewardKind) -> Self {
        Self {
            kind,
            config: RewardConfig::default(),
        }
    }

    /// Dispatches to the reward named by `kind`. Does not add the success bonus.
    pub fn evaluate(&self, inputs: &RewardInputs) -> Result<f64, RewardError> {
        evaluate(self, inputs)
    }
}

/// Task status indicator: 1 strictly inside the success radius, else 0.
pub fn task_status(d_pt: f64, beta: f64) -> f64 {
    if d_pt < beta {
        1.0
    } else {
        0.0
    }
}

pub fn position_reward(d_pt: f64, beta: f64) -> f64 {
    task_status(d_pt, beta) - d_pt
}

/// Vector from the end-effector to the target.
pub fn expected_direction(p: &[f64; 3], t: &[f64; 3]) -> Result<[f64; 3], RewardError> {
    let v = [t[0] - p[0], t[1] - p[1], t[2] - p[2]];
    if v == [0.0; 3] {
        return Err(RewardError::ZeroExpectedDirection);
    }
    Ok(v)
}

/// Actual motion direction. `Ok(None)` signals an undefined rotation axis
/// (identity-like quaternion), which callers treat as a zero direction penalty.
pub fn actual_direction(
    inputs: &RewardInputs,
    mode: DirectionMode,
) -> Result<Option<[f64; 3]>, RewardError> {
    match mode {
        DirectionMode::QuaternionAxis => Ok(quaternion_axis(&inputs.ee_quaternion)),
        DirectionMode::Displacement => {
            if inputs.displacement == [0.0; 3] {
                return Err(RewardError::ZeroDisplacement);
            }
            Ok(Some(inputs.displacement))
        }
    }
}

/// `(x, y, z) / sin(acos(w))`, or `None` when the divisor is below [`AXIS_EPS`].
pub fn quaternion_axis(q: &[f64; 4]) -> Option<[f64; 3]> {
    let temp = q[3].clamp(-1.0, 1.0).acos().sin();
    if temp < AXIS_EPS {
        return None;
    }
    Some([q[0] / temp, q[1] / temp, q[2] / temp])
}

/// Unsigned angle between two vectors, in `[0, pi]`.
pub fn angle_between(v1: &[f64; 3], v2: &[f64; 3]) -> Result<f64, RewardError> {
    let d11 = dot(v1, v1);
    let d22 = dot(v2, v2);
    if d11 == 0.0 || d22 == 0.0 {
        return Err(RewardError::ZeroVector);
    }
    let ratio = (dot(v1, v2) / (d11 * d22).sqrt()).clamp(-1.0, 1.0);
    Ok(ratio.acos().abs())
}

/// Folded angle over `2*pi`; range `[0, 1/4]`.
pub fn direction_reward(phi: f64) -> f64 {
    let folded = if phi < FRAC_PI_2 { phi } else { PI - phi };
    folded / TAU
}

/// Deviation angle between expected and actual directions, `None` when the
/// actual direction is undefined (identity-like quaternion, or no motion in
/// displacement mode).
pub fn deviation_angle(inputs: &RewardInputs, cfg: &RewardConfig) -> Result<Option<f64>, RewardError> {
    let expected = expected_direction(&inputs.ee_position, &inputs.target)?;
    let actual = match actual_direction(inputs, cfg.direction_mode) {
        Ok(a) => a,
        Err(RewardError::ZeroDisplacement) => None,
        Err(e) => return Err(e),
    };
    match actual {
        Some(actual) => angle_between(&expected, &actual).map(Some),
        None => Ok(None),
    }
}

pub fn posture_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let penalty = deviation_angle(inputs, cfg)?.map_or(0.0, direction_reward);
    Ok(position_reward(inputs.d_pt, cfg.beta) - penalty)
}

/// Mean squared joint velocity scaled by the control period.
pub fn move_reward(joint_velocities: &[f64], dt: f64, joint_count: usize) -> f64 {
    let sq: f64 = joint_velocities.iter().map(|v| v * v).sum();
    dt * sq / joint_count as f64
}

pub fn stride_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> f64 {
    position_reward(inputs.d_pt, cfg.beta)
        - move_reward(&inputs.joint_velocities, inputs.dt, inputs.joint_count)
}

/// Posture outside the boundary, stride at or inside it.
pub fn har_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> Result<f64, RewardError> {
    if inputs.d_pt > cfg.har_boundary {
        posture_reward(inputs, cfg)
    } else {
        Ok(stride_reward(inputs, cfg))
    }
}

/// Blend weights `(alpha1, alpha2)` for stride and posture.
pub fn sar_weights(d_pt: f64, cfg: &RewardConfig) -> (f64, f64) {
    let c = d_pt.clamp(0.0, 1.0);
    (1.0 - c.powf(cfg.sigma1), c.powf(cfg.sigma2))
}

pub fn sar_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let (a1, a2) = sar_weights(inputs.d_pt, cfg);
    let posture = posture_reward(inputs, cfg)?;
    let stride = stride_reward(inputs, cfg);
    Ok(a1 * stride + a2 * posture)
}

pub fn sparse_reward(task_done: bool) -> f64 {
    if task_done {
        1.0
    } else {
        0.0
    }
}

pub fn evaluate(spec: &RewardSpec, inputs: &RewardInputs) -> Result<f64, RewardError> {
    let cfg = &spec.config;
    match spec.kind {
        RewardKind::Basic => Ok(sparse_reward(inputs.task_done)),
        RewardKind::Position => Ok(position_reward(inputs.d_pt, cfg.beta)),
        RewardKind::Posture => posture_reward(inputs, cfg),
        RewardKind::Stride => Ok(stride_reward(inputs, cfg)),
        RewardKind::Har => har_reward(inputs, cfg),
        RewardKind::Sar => sar_reward(inputs, cfg),
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    dot(&d, &d).sqrt()
}
