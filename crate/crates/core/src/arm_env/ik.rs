//! Numerical inverse kinematics for tip position, used for target
//! reachability checks and by the scripted oracle.

use super::ArmConfig;
use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IK_TOLERANCE: f64 = 1e-7;
const IK_ITERS: usize = 300;
const IK_RESTARTS: usize = 24;
const IK_START_SEED: u64 = 0x1c0ffee;
const IK_DAMPING: f64 = 1e-2;
const IK_MAX_STEP: f64 = 0.5;

/// Tip position and the positional Jacobian (one column per joint).
pub fn tip_and_jacobian(cfg: &ArmConfig, q: &[f64]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let mut rot = UnitQuaternion::identity();
    let mut pos = Vector3::zeros();
    let mut joints = Vec::with_capacity(q.len());
    for ((&angle, axis), &len) in q.iter().zip(&cfg.joint_axes).zip(&cfg.link_lengths) {
        let local = Unit::new_unchecked(axis.unit());
        rot *= UnitQuaternion::from_axis_angle(&local, angle);
        joints.push((rot * axis.unit(), pos));
        pos += rot * Vector3::new(len, 0.0, 0.0);
    }
    let cols = joints.into_iter().map(|(w, p)| w.cross(&(pos - p))).collect();
    (pos, cols)
}

/// Damped least-squares joint increment for a tip displacement `dx`.
pub fn dls_step(cols: &[Vector3<f64>], dx: &Vector3<f64>, damping: f64) -> Option<Vec<f64>> {
    let mut jjt = Matrix3::identity() * damping * damping;
    for c in cols {
        jjt += c * c.transpose();
    }
    let y = jjt.lu().solve(dx)?;
    Some(cols.iter().map(|c| c.dot(&y)).collect())
}

fn clamp_to_limits(cfg: &ArmConfig, q: &mut [f64]) {
    for (v, [lo, hi]) in q.iter_mut().zip(&cfg.joint_limits) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Iterates damped least squares from `start` until the tip is within
/// [`IK_TOLERANCE`] of `target`, respecting joint limits.
pub fn solve_from(cfg: &ArmConfig, start: &[f64], target: [f64; 3]) -> Option<Vec<f64>> {
    let target = Vector3::from(target);
    let mut q = start.to_vec();
    clamp_to_limits(cfg, &mut q);
    for _ in 0..IK_ITERS {
        let (tip, cols) = tip_and_jacobian(cfg, &q);
        let err = target - tip;
        if err.norm() < IK_TOLERANCE {
            return Some(q);
        }
        let dq = dls_step(&cols, &err, IK_DAMPING)?;
        for (v, d) in q.iter_mut().zip(dq) {
            *v += d.clamp(-IK_MAX_STEP, IK_MAX_STEP);
        }
        clamp_to_limits(cfg, &mut q);
    }
    ((target - tip_and_jacobian(cfg, &q).0).norm() < IK_TOLERANCE).then_some(q)
}

/// Fixed spread of starting postures inside the joint limits.
pub fn restart_postures(cfg: &ArmConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(IK_START_SEED);
    (0..IK_RESTARTS)
        .map(|_| {
            cfg.joint_limits
                .iter()
                .map(|[lo, hi]| rng.random_range(*lo..=*hi))
                .collect()
        })
        .collect()
}

/// Any solution, trying `first` and then the restart postures.
pub fn find_solution(cfg: &ArmConfig, first: &[f64], target: [f64; 3]) -> Option<Vec<f64>> {
    std::iter::once(first.to_vec())
        .chain(restart_postures(cfg))
        .find_map(|s| solve_from(cfg, &s, target))
}

/// The solution needing the least max-joint travel from `q` among all starts.
pub fn nearest_solution(cfg: &ArmConfig, q: &[f64], target: [f64; 3]) -> Option<Vec<f64>> {
    let travel = |s: &[f64]| s.iter().zip(q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    std::iter::once(q.to_vec())
        .chain(restart_postures(cfg))
        .filter_map(|s| solve_from(cfg, &s, target))
        .min_by(|a, b| travel(a).total_cmp(&travel(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_env::forward_kinematics;

    #[test]
    fn analytic_jacobian_matches_differences() {
        let cfg = ArmConfig::six_dof();
        let q = [0.3, -0.7, 1.1, 0.2, -1.4, 0.9];
        let (tip, cols) = tip_and_jacobian(&cfg, &q);
        let fk = forward_kinematics(&q, &cfg.joint_axes, &cfg.link_lengths).position;
        assert!((tip - Vector3::from(fk)).norm() < 1e-14);
        let h = 1e-6;
        for (i, col) in cols.iter().enumerate() {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let p = Vector3::from(forward_kinematics(&qp, &cfg.joint_axes, &cfg.link_lengths).position);
            let m = Vector3::from(forward_kinematics(&qm, &cfg.joint_axes, &cfg.link_lengths).position);
            assert!(((p - m) / (2.0 * h) - col).norm() < 1e-8);
        }
    }

    #[test]
    fn solves_a_posture_it_was_built_from() {
        let cfg = ArmConfig::six_dof();
        let q = [1.0, 0.4, -0.8, 0.6, 0.3, -0.2];
        let t = forward_kinematics(&q, &cfg.joint_axes, &cfg.link_lengths).position;
        let s = find_solution(&cfg, &cfg.home_posture(), t).unwrap();
        let p = forward_kinematics(&s, &cfg.joint_axes, &cfg.link_lengths).position;
        assert!((Vector3::from(p) - Vector3::from(t)).norm() < IK_TOLERANCE);
    }

    #[test]
    fn out_of_reach_has_no_solution() {
        let cfg = ArmConfig::planar_2dof();
        assert!(find_solution(&cfg, &cfg.home_posture(), [1.2, 0.0, 0.0]).is_none());
        assert!(find_solution(&cfg, &cfg.home_posture(), [0.5, 0.0, 0.3]).is_none());
    }
}
