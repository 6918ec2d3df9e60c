use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagerl_core::rewards::*;
use std::f64::consts::{FRAC_PI_2, PI};

/// P at the origin, T on +x at distance `d`, quaternion axis at angle `phi` from +x.
fn inputs(d: f64, phi: f64, vel: Vec<f64>) -> RewardInputs {
    let n = vel.len();
    RewardInputs {
        d_pt: d,
        ee_position: [0.0; 3],
        target: [d, 0.0, 0.0],
        ee_quaternion: [phi.cos(), phi.sin(), 0.0, 0.0],
        displacement: [1.0, 0.0, 0.0],
        joint_velocities: vel,
        dt: 0.05,
        joint_count: n,
        task_done: d < 0.01,
    }
}

#[test]
fn sar_is_continuous_in_distance() {
    let cfg = RewardConfig::default();
    let eps = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 10_000 {
        let d: f64 = rng.random_range(1e-4..2.0);
        // the success indicator steps at beta by design
        if (d - cfg.beta).abs() < 2.0 * eps {
            continue;
        }
        let phi = rng.random_range(0.0..PI);
        let vel: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = sar_reward(&inputs(d, phi, vel.clone()), &cfg).unwrap();
        let b = sar_reward(&inputs(d + eps, phi, vel), &cfg).unwrap();
        assert!((a - b).abs() <= 10.0 * eps, "d={d} jump {}", (a - b).abs());
        checked += 1;
    }
}

#[test]
fn har_jumps_at_the_boundary() {
    let cfg = RewardConfig::default();
    let eps = 1e-6;
    // quarter-turn deviation and zero velocity: posture is 0.25 below stride
    let outside = har_reward(&inputs(0.5 + eps, FRAC_PI_2, vec![0.0; 6]), &cfg).unwrap();
    let inside = har_reward(&inputs(0.5, FRAC_PI_2, vec![0.0; 6]), &cfg).unwrap();
    assert!((inside - outside - 0.25).abs() < 1e-5);
    // the blended reward has no such jump at the same place
    let sa = sar_reward(&inputs(0.5 + eps, FRAC_PI_2, vec![0.0; 6]), &cfg).unwrap();
    let sb = sar_reward(&inputs(0.5, FRAC_PI_2, vec![0.0; 6]), &cfg).unwrap();
    assert!((sa - sb).abs() <= 10.0 * eps);
}

#[test]
fn direction_fold_is_symmetric() {
    for i in 0..=1000 {
        let phi = PI * i as f64 / 1000.0;
        assert!((direction_reward(phi) - direction_reward(PI - phi)).abs() <= 1e-12, "phi={phi}");
    }
}

#[test]
fn sar_matches_its_endpoints() {
    let cfg = RewardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let d = rng.random_range(1.0..5.0);
        let phi = rng.random_range(0.0..PI);
        let vel: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let i = inputs(d, phi, vel);
        assert_eq!(sar_reward(&i, &cfg).unwrap(), posture_reward(&i, &cfg).unwrap());
    }
}

#[test]
fn planar_quaternion_penalty_is_constant() {
    // A planar arm rotates about z only, so the axis is always perpendicular to T - P.
    let cfg = RewardConfig::default();
    for k in 1..100 {
        let theta = 0.06 * k as f64;
        let (s, c) = (theta / 2.0).sin_cos();
        let mut i = inputs(0.3, 0.0, vec![0.0, 0.0]);
        i.target = [0.3 * theta.cos(), 0.3 * theta.sin(), 0.0];
        i.ee_quaternion = [0.0, 0.0, s, c];
        let penalty = position_reward(i.d_pt, cfg.beta) - posture_reward(&i, &cfg).unwrap();
        assert!((penalty - 0.25).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn reward_ranges(d in 0.0f64..3.0, phi in 0.0f64..PI, vel in proptest::collection::vec(-2.0f64..2.0, 2..7)) {
        prop_assume!(d > 0.0);
        let cfg = RewardConfig::default();
        let i = inputs(d, phi, vel.clone());
        let dir = direction_reward(phi);
        prop_assert!((0.0..=0.25).contains(&dir));
        let pos = position_reward(d, cfg.beta);
        prop_assert!(pos <= 1.0 && pos >= -d);
        let mv = move_reward(&vel, 0.05, vel.len());
        prop_assert!(mv >= 0.0 && mv <= 0.05 * 4.0);
        let (a1, a2) = sar_weights(d, &cfg);
        prop_assert!((a1 + a2 - 1.0).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&a1) && (0.0..=1.0).contains(&a2));
        // the blend lies between its two parts
        let posture = posture_reward(&i, &cfg).unwrap();
        let stride = stride_reward(&i, &cfg);
        let sar = sar_reward(&i, &cfg).unwrap();
        prop_assert!(sar >= posture.min(stride) - 1e-12 && sar <= posture.max(stride) + 1e-12);
        let har = har_reward(&i, &cfg).unwrap();
        prop_assert!(har == posture || har == stride);
        prop_assert_eq!(sparse_reward(i.task_done), task_status(d, cfg.beta));
    }

    #[test]
    fn angle_is_symmetric_and_bounded(a in proptest::array::uniform3(-5.0f64..5.0), b in proptest::array::uniform3(-5.0f64..5.0)) {
        prop_assume!(a.iter().any(|c| *c != 0.0) && b.iter().any(|c| *c != 0.0));
        let x = angle_between(&a, &b).unwrap();
        let y = angle_between(&b, &a).unwrap();
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=PI).contains(&x));
    }
}
