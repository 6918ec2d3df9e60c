//! Line-delimited JSON protocol exposing an [`ArmEnv`] to external drivers.
//!
//! Requests (one JSON object per line):
//!
//! ```text
//! {"cmd":"spec","v":1}
//! {"cmd":"reset","seed":7,"v":1}
//! {"cmd":"step","action":[0.1,-0.4],"v":1}
//! ```
//!
//! `reset` and `step` answer with a [`Observation`]; `spec` with a [`SpecInfo`].
//! Failures answer `{"v":1,"error":"..."}` and leave the session usable.
//! Responses carry kinematic facts only; rewards are computed on the
//! consumer side with [`reward_inputs`].

use crate::arm_env::{ArmEnv, EnvState, OBS_LAYOUT};
use crate::rewards::RewardInputs;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Spec {
        v: Option<u32>,
    },
    Reset {
        seed: u64,
        v: Option<u32>,
    },
    Step {
        action: Vec<f64>,
        v: Option<u32>,
    },
}

impl Request {
    fn version(&self) -> Option<u32> {
        match self {
            Request::Spec { v } | Request::Reset { v, .. } | Request::Step { v, .. } => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub v: u32,
    pub obs: Vec<f64>,
    pub d_pt: f64,
    pub ee_pos: [f64; 3],
    pub ee_quat: [f64; 4],
    pub qvel: Vec<f64>,
    pub target: [f64; 3],
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecInfo {
    pub v: u32,
    pub n: usize,
    pub dt: f64,
    pub beta: f64,
    pub obs_len: usize,
    pub max_steps: usize,
    pub obs_layout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub v: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Observation(Observation),
    Spec(SpecInfo),
    Error(ErrorReply),
}

impl Response {
    pub fn error(message: impl Into<String>) -> Self {
        Response::Error(ErrorReply {
            v: PROTOCOL_VERSION,
            error: message.into(),
        })
    }
}

/// Packs an environment state the way the server reports it.
pub fn observation(env: &ArmEnv, state: &EnvState) -> Observation {
    Observation {
        v: PROTOCOL_VERSION,
        obs: env.observe(state),
        d_pt: state.d_pt,
        ee_pos: state.ee_pose.position,
        ee_quat: state.ee_pose.orientation,
        qvel: state.joint_velocities.clone(),
        target: state.target,
        done: env.is_done(state),
        success: env.is_success(state),
    }
}

/// Reward inputs for the move between two consecutive responses.
pub fn reward_inputs(prev: &Observation, next: &Observation, spec: &SpecInfo) -> RewardInputs {
    let displacement = [
        next.ee_pos[0] - prev.ee_pos[0],
        next.ee_pos[1] - prev.ee_pos[1],
        next.ee_pos[2] - prev.ee_pos[2],
    ];
    RewardInputs {
        d_pt: next.d_pt,
        ee_position: next.ee_pos,
        target: next.target,
        ee_quaternion: next.ee_quat,
        displacement,
        joint_velocities: next.qvel.clone(),
        dt: spec.dt,
        joint_count: spec.n,
        task_done: next.success,
    }
}

/// One client connection: an environment plus the current episode state.
#[derive(Debug, Clone)]
pub struct Session {
    env: ArmEnv,
    state: Option<EnvState>,
}

impl Session {
    pub fn new(env: ArmEnv) -> Self {
        Self { env, state: None }
    }

    pub fn spec(&self) -> SpecInfo {
        let cfg = self.env.config();
        SpecInfo {
            v: PROTOCOL_VERSION,
            n: cfg.joint_count(),
            dt: cfg.dt,
            beta: cfg.beta,
            obs_len: cfg.obs_len(),
            max_steps: cfg.max_steps,
            obs_layout: OBS_LAYOUT.to_string(),
        }
    }

    pub fn handle(&mut self, request: Request) -> Response {
        if let Some(v) = request.version().filter(|&v| v != PROTOCOL_VERSION) {
            return Response::error(format!("unsupported protocol version {v}"));
        }
        match request {
            Request::Spec { .. } => Response::Spec(self.spec()),
            Request::Reset { seed, .. } => match self.env.reset(seed) {
                Ok(s) => {
                    let out = observation(&self.env, &s);
                    self.state = Some(s);
                    Response::Observation(out)
                }
                Err(e) => Response::error(e.to_string()),
            },
            Request::Step { action, .. } => {
                let Some(state) = &self.state else {
                    return Response::error("step before reset");
                };
                if self.env.is_success(state) {
                    return Response::error("episode already ended in success; reset first");
                }
                match self.env.advance(state, &action) {
                    Ok(next) => {
                        let out = observation(&self.env, &next);
                        self.state = Some(next);
                        Response::Observation(out)
                    }
                    Err(e) => Response::error(e.to_string()),
                }
            }
        }
    }

    /// Parses one request line and serializes the reply (without newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line.trim()) {
            Ok(req) => self.handle(req),
            Err(e) => Response::error(format!("malformed request: {e}")),
        };
        serde_json::to_string(&response).expect("responses serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_env::ArmConfig;

    fn session() -> Session {
        Session::new(ArmEnv::new(ArmConfig::planar_2dof()).unwrap())
    }

    #[test]
    fn spec_reports_dimensions() {
        let mut s = session();
        let reply: SpecInfo = serde_json::from_str(&s.handle_line(r#"{"cmd":"spec","v":1}"#)).unwrap();
        assert_eq!(reply.n, 2);
        assert_eq!(reply.obs_len, 15);
        assert_eq!(reply.dt, 0.05);
        assert_eq!(reply.beta, 0.01);
    }

    #[test]
    fn errors_keep_the_session_alive() {
        let mut s = session();
        let bad: ErrorReply = serde_json::from_str(&s.handle_line("{not json")).unwrap();
        assert_eq!(bad.v, 1);
        let early: ErrorReply = serde_json::from_str(&s.handle_line(r#"{"cmd":"step","action":[0,0]}"#)).unwrap();
        assert!(early.error.contains("reset"));
        let wrong_v: ErrorReply = serde_json::from_str(&s.handle_line(r#"{"cmd":"spec","v":2}"#)).unwrap();
        assert!(wrong_v.error.contains("version"));
        let ok: Observation = serde_json::from_str(&s.handle_line(r#"{"cmd":"reset","seed":3}"#)).unwrap();
        assert_eq!(ok.obs.len(), 15);
        let short: ErrorReply = serde_json::from_str(&s.handle_line(r#"{"cmd":"step","action":[0]}"#)).unwrap();
        assert!(short.error.contains("length"), "{}", short.error);
        let ok: Observation = serde_json::from_str(&s.handle_line(r#"{"cmd":"step","action":[0.5,-0.5]}"#)).unwrap();
        assert_eq!(ok.qvel, vec![1.0, -1.0]);
    }

    #[test]
    fn stepping_past_the_limit_is_an_error() {
        let mut s = session();
        s.handle_line(r#"{"cmd":"reset","seed":1}"#);
        let mut last = String::new();
        for _ in 0..50 {
            last = s.handle_line(r#"{"cmd":"step","action":[0,0]}"#);
        }
        let o: Observation = serde_json::from_str(&last).unwrap();
        assert!(o.done && !o.success);
        assert!(s.handle_line(r#"{"cmd":"step","action":[0,0]}"#).contains("error"));
    }
}
