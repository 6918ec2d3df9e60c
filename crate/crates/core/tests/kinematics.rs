use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagerl_core::arm_env::{forward_kinematics, JointAxis};
use stagerl_core::rewards::{self, RewardKind, RewardSpec};
use stagerl_core::{ArmConfig, ArmEnv};
use std::f64::consts::PI;

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn rot(axis: JointAxis, q: f64) -> M4 {
    let (s, c) = q.sin_cos();
    match axis {
        JointAxis::X => [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        JointAxis::Y => [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]],
        JointAxis::Z => [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
    }
}

fn trans_x(l: f64) -> M4 {
    [[1.0, 0.0, 0.0, l], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Homogeneous transform chain: rotate about the joint axis, then translate along local x.
fn chain(q: &[f64], axes: &[JointAxis], lengths: &[f64]) -> M4 {
    let mut t = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    for i in 0..q.len() {
        t = mul(&t, &rot(axes[i], q[i]));
        t = mul(&t, &trans_x(lengths[i]));
    }
    t
}

/// Rotation matrix of a scalar-last unit quaternion.
fn quat_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [x, y, z, w] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

#[test]
fn forward_kinematics_matches_transform_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let axes_pool = [JointAxis::X, JointAxis::Y, JointAxis::Z];
    for _ in 0..1000 {
        let n = rng.random_range(2..=7);
        let axes: Vec<JointAxis> = (0..n).map(|_| axes_pool[rng.random_range(0..3)]).collect();
        let lengths: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let pose = forward_kinematics(&q, &axes, &lengths);
        let t = chain(&q, &axes, &lengths);
        for i in 0..3 {
            assert!((pose.position[i] - t[i][3]).abs() < 1e-10);
        }
        let r = quat_matrix(pose.orientation);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - t[i][j]).abs() < 1e-10);
            }
        }
        let norm: f64 = pose.orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn straight_and_rotated_planar_arm() {
    let axes = [JointAxis::Z, JointAxis::Z];
    let p = forward_kinematics(&[0.0, 0.0], &axes, &[1.0, 1.0]).position;
    assert!((p[0] - 2.0).abs() < 1e-12 && p[1].abs() < 1e-12 && p[2].abs() < 1e-12);
    let p = forward_kinematics(&[PI / 2.0, 0.0], &axes, &[1.0, 1.0]).position;
    assert!(p[0].abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12);
}

#[test]
fn quaternion_axis_inverts_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let mut axis: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = axis.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n < 1e-3 {
            continue;
        }
        axis.iter_mut().for_each(|c| *c /= n);
        let angle = rng.random_range(1e-3..(2.0 * PI - 1e-3));
        let (s, c) = (angle / 2.0).sin_cos();
        let q = [axis[0] * s, axis[1] * s, axis[2] * s, c];
        let got = rewards::quaternion_axis(&q).unwrap();
        for i in 0..3 {
            assert!((got[i] - axis[i]).abs() < 1e-9, "{got:?} vs {axis:?} at {angle}");
        }
    }
}

#[test]
fn sampled_targets_stay_in_the_workspace() {
    for arm in [ArmConfig::planar_2dof(), ArmConfig::six_dof()] {
        let env = ArmEnv::new(arm.clone()).unwrap();
        let lo = arm.workspace[0] * arm.total_reach();
        let hi = arm.workspace[1] * arm.total_reach();
        let samples = if arm.is_planar() { 10_000 } else { 2_000 };
        for seed in 0..samples {
            let s = env.reset(seed).unwrap();
            let r = s.target.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(r >= lo - 1e-12 && r <= hi + 1e-12, "radius {r}");
            assert!(arm.can_reach(s.target));
            if arm.is_planar() {
                assert_eq!(s.target[2], 0.0);
            }
        }
    }
}

#[test]
fn degenerate_annulus_fixes_the_radius() {
    let arm = ArmConfig {
        workspace: [0.6, 0.6],
        ..ArmConfig::planar_2dof()
    };
    let env = ArmEnv::new(arm).unwrap();
    for seed in 0..1000 {
        let t = env.reset(seed).unwrap().target;
        let r = (t[0] * t[0] + t[1] * t[1]).sqrt();
        assert!((r - 0.6).abs() < 1e-9);
    }
}

#[test]
fn unreachable_workspace_is_a_configuration_error() {
    // 0.9 + 0.1 links cannot reach closer than 0.8 to the base.
    let arm = ArmConfig {
        link_lengths: vec![0.9, 0.1],
        workspace: [0.2, 0.5],
        ..ArmConfig::planar_2dof()
    };
    let env = ArmEnv::new(arm).unwrap();
    assert!(env.reset(1).is_err());
}

fn arm_strategy() -> impl Strategy<Value = ArmConfig> {
    prop_oneof![Just(ArmConfig::planar_2dof()), Just(ArmConfig::six_dof())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollout_invariants(arm in arm_strategy(), seed in any::<u64>(), action_seed in any::<u64>()) {
        let env = ArmEnv::new(arm.clone()).unwrap();
        let spec = RewardSpec::new(RewardKind::Sar);
        let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
        let reach = arm.total_reach();
        let lipschitz = reach * arm.max_joint_speed * arm.dt * arm.joint_count() as f64;
        let mut s = env.reset(seed).unwrap();
        let mut replay = Vec::new();
        loop {
            let action: Vec<f64> = (0..arm.joint_count()).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (next, t) = env.step(&s, &action, &spec).unwrap();
            replay.push(action);
            let p = next.ee_pose.position;
            let t_norm = next.target.iter().map(|c| c * c).sum::<f64>().sqrt();
            let p_norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
            let d: f64 = (0..3).map(|i| (next.target[i] - p[i]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((next.d_pt - d).abs() <= 1e-12);
            prop_assert!(p_norm <= reach + 1e-12);
            prop_assert!(next.d_pt >= t_norm - reach - 1e-12);
            let moved: f64 = (0..3).map(|i| (p[i] - s.ee_pose.position[i]).powi(2)).sum::<f64>().sqrt();
            prop_assert!(moved <= lipschitz + 1e-12);
            for (q, [lo, hi]) in next.joint_angles.iter().zip(&arm.joint_limits) {
                prop_assert!(*q >= *lo && *q <= *hi);
            }
            prop_assert!(t.reward.is_finite());
            prop_assert!(!t.success || t.done);
            prop_assert!(t.action.iter().all(|a| (-1.0..=1.0).contains(a)));
            prop_assert!(next.step_index <= arm.max_steps);
            s = next;
            if t.done {
                prop_assert!(t.success == (s.d_pt < arm.beta));
                break;
            }
        }
        // same seed and actions reproduce the trajectory bit for bit
        let mut again = env.reset(seed).unwrap();
        for a in &replay {
            again = env.step(&again, a, &spec).unwrap().0;
        }
        prop_assert_eq!(again, s);
    }

    #[test]
    fn observation_is_pure_and_bounded(seed in any::<u64>()) {
        let env = ArmEnv::new(ArmConfig::six_dof()).unwrap();
        let s = env.reset(seed).unwrap();
        let s = env.step(&s, &[0.3, -1.0, 1.0, 0.2, 0.0, -0.5], &RewardSpec::new(RewardKind::Stride)).unwrap().0;
        let o = env.observe(&s);
        prop_assert_eq!(&o, &env.observe(&s));
        prop_assert_eq!(o.len(), 27);
        prop_assert!(o[..18].iter().all(|v| (-1.0..=1.0).contains(v)));
        for i in 0..3 {
            prop_assert_eq!(o[24 + i], s.target[i] - s.ee_pose.position[i]);
        }
    }
}
