use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagerl_core::agents::{Checkpoint, Ddpg, ReplayBuffer, Sac};
use stagerl_core::neuro::{Activation, Mlp};
use stagerl_core::{Agent, AgentConfig, Algorithm, ArmConfig, RewardInputs, RewardKind, RewardSpec, Transition};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn transition(obs: Vec<f64>, action: Vec<f64>, reward: f64, next: Vec<f64>, success: bool) -> Transition {
    Transition {
        observation: obs,
        action,
        reward,
        next_observation: next,
        done: success,
        success,
        info: RewardInputs::new([0.0; 3], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0; 3], vec![0.0], 0.05, 0.01),
    }
}

/// Loss `g . f(x)` and the sign pattern of every hidden ReLU, from a plain-loop
/// forward pass independent of the library's.
fn probe(net: &Mlp, x: &[f64], g: &[f64]) -> (f64, Vec<bool>) {
    let mut h = x.to_vec();
    let mut mask = Vec::new();
    for (l, act) in net.activations().iter().enumerate() {
        let (w, b) = net.layer(l);
        h = w
            .chunks_exact(h.len())
            .zip(b)
            .map(|(row, bias)| bias + row.iter().zip(&h).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        match act {
            Activation::Relu => {
                mask.extend(h.iter().map(|v| *v > 0.0));
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            Activation::Tanh => h.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Linear => {}
        }
    }
    (h.iter().zip(g).map(|(a, b)| a * b).sum(), mask)
}

/// Largest relative error over parameters and inputs, and how many probes flipped a ReLU.
fn gradient_error(net: &Mlp, x: &[f64], g: &[f64]) -> (f64, usize) {
    let h = 1e-4;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let (_, tape) = net.forward(x).unwrap();
    let (pgrad, xgrad) = net.backward(&tape, g).unwrap();
    let (reference, mask) = probe(net, x, g);
    let library: f64 = net.predict(x).unwrap().iter().zip(g).map(|(a, b)| a * b).sum();
    assert!((reference - library).abs() <= 1e-12 * library.abs().max(1.0));
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut work = net.clone();
    for i in 0..net.num_params() {
        let w = work.params_mut()[i];
        work.params_mut()[i] = w + h;
        let (lp, mp) = probe(&work, x, g);
        work.params_mut()[i] = w - h;
        let (lm, mm) = probe(&work, x, g);
        work.params_mut()[i] = w;
        if mp != mask || mm != mask {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel(pgrad[i], (lp - lm) / (2.0 * h)));
    }
    let mut xs = x.to_vec();
    for j in 0..x.len() {
        xs[j] = x[j] + h;
        let (lp, mp) = probe(net, &xs, g);
        xs[j] = x[j] - h;
        let (lm, mm) = probe(net, &xs, g);
        xs[j] = x[j];
        if mp != mask || mm != mask {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel(xgrad[j], (lp - lm) / (2.0 * h)));
    }
    (worst, skipped)
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = AgentConfig::default();
    let mut nets = 0;
    let mut worst: f64 = 0.0;
    for arm in [ArmConfig::planar_2dof(), ArmConfig::six_dof()] {
        let (obs, n) = (arm.obs_len(), arm.joint_count());
        let shapes = [
            (obs, n, Activation::Tanh),
            (obs + n, 1, Activation::Linear),
            (obs, 2 * n, Activation::Linear),
        ];
        for _ in 0..17 {
            for &(inp, out, act) in &shapes {
                let mut sizes = vec![inp];
                sizes.extend(&cfg.hidden);
                sizes.push(out);
                let net = Mlp::new(&sizes, Activation::Relu, act, &mut rng);
                let x: Vec<f64> = (0..inp).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (err, skipped) = gradient_error(&net, &x, &g);
                assert!(skipped < net.num_params() / 10, "too many kink crossings: {skipped}");
                worst = worst.max(err);
                nets += 1;
            }
        }
    }
    assert!(nets >= 100);
    assert!(worst < 1e-4, "max relative error {worst}");
}

fn bellman_fixed_point(algorithm: Algorithm) -> f64 {
    let cfg = AgentConfig {
        algorithm,
        warmup_steps: 200,
        ..Default::default()
    };
    let obs = vec![0.3; 15];
    let action = vec![0.2, -0.4];
    let t = transition(obs.clone(), action.clone(), 0.0, obs.clone(), true);
    let mut q = f64::NAN;
    match algorithm {
        Algorithm::Ddpg => {
            let mut agent = Ddpg::new(cfg, 15, 2, 3).unwrap();
            for _ in 0..(200 + 5000) {
                agent.observe(&t).unwrap();
            }
            assert_eq!(agent.updates(), 5001);
            q = agent.q_value(&obs, &action).unwrap();
        }
        Algorithm::Sac => {
            let mut agent = Sac::new(cfg, 15, 2, 3).unwrap();
            for _ in 0..(200 + 5000) {
                agent.observe(&t).unwrap();
            }
            let x: Vec<f64> = obs.iter().chain(&action).copied().collect();
            for c in agent.critics() {
                let v = c.predict(&x).unwrap()[0];
                if q.is_nan() || v.abs() > q.abs() {
                    q = v;
                }
            }
        }
    }
    q
}

#[test]
fn critics_reach_the_terminal_fixed_point() {
    for alg in [Algorithm::Ddpg, Algorithm::Sac] {
        let q = bellman_fixed_point(alg);
        assert!(q.abs() < 0.05, "{alg}: Q = {q}");
    }
}

#[test]
fn ddpg_solves_a_bandit() {
    let target = [0.5, -0.3];
    let cfg = AgentConfig {
        warmup_steps: 500,
        ..Default::default()
    };
    let obs = vec![1.0, -0.5, 0.25];
    let mut agent = Ddpg::new(cfg, 3, 2, 4).unwrap();
    let mut reached = None;
    for step in 0..20_000 {
        let a = agent.act(&obs, true).unwrap();
        let r = -a.iter().zip(&target).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        agent.observe(&transition(obs.clone(), a, r, obs.clone(), true)).unwrap();
        if step % 500 == 499 {
            let g = agent.act(&obs, false).unwrap();
            let err = g.iter().zip(&target).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            if err < 0.1 {
                reached = Some(step);
                break;
            }
        }
    }
    assert!(reached.is_some(), "greedy action never came within 0.1 of the optimum");
}

#[test]
fn fresh_actors_start_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let arm = ArmConfig::six_dof();
    for seed in 0..20 {
        for alg in [Algorithm::Ddpg, Algorithm::Sac] {
            let cfg = AgentConfig { algorithm: alg, ..Default::default() };
            let mut agent = stagerl_core::agents::Learner::new(&cfg, arm.obs_len(), 6, seed).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..arm.obs_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = agent.act(&x, false).unwrap();
                assert!(a.iter().all(|v| v.abs() < 0.1), "{alg}: {a:?}");
            }
        }
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let cells = 100;
    let mut buf = ReplayBuffer::new(cells, 1, 1);
    for i in 0..cells {
        buf.push(&transition(vec![i as f64], vec![0.0], 0.0, vec![0.0], false));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = 100_000;
    let mut counts = vec![0usize; cells];
    for i in buf.sample_indices(draws, &mut rng) {
        counts[i] += 1;
    }
    let expected = draws as f64 / cells as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
}

#[test]
fn target_networks_stay_convex_combinations() {
    let cfg = AgentConfig {
        hidden: vec![8, 8],
        batch_size: 4,
        warmup_steps: 4,
        ..Default::default()
    };
    let mut agent = Ddpg::new(cfg, 2, 1, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let before = agent.critic_target().params().to_vec();
        let o: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        agent.observe(&transition(o.clone(), vec![0.1], 1.0, o, false)).unwrap();
        let online = agent.critic().params();
        let tau = agent.config().tau;
        for ((t, b), o) in agent.critic_target().params().iter().zip(&before).zip(online) {
            if agent.updates() > 0 {
                assert!((t - ((1.0 - tau) * b + tau * o)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn checkpoints_round_trip_greedy_actions() {
    let dir = tempfile::tempdir().unwrap();
    let arm = ArmConfig::planar_2dof();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for alg in [Algorithm::Ddpg, Algorithm::Sac] {
        let cfg = AgentConfig {
            algorithm: alg,
            hidden: vec![16, 16],
            batch_size: 8,
            warmup_steps: 10,
            ..Default::default()
        };
        let mut agent = stagerl_core::agents::Learner::new(&cfg, arm.obs_len(), 2, 1).unwrap();
        for _ in 0..40 {
            let o: Vec<f64> = (0..arm.obs_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = agent.act(&o, true).unwrap();
            agent.observe(&transition(o.clone(), a, -0.3, o, false)).unwrap();
        }
        let path = dir.path().join(format!("{alg}.json"));
        Checkpoint::new(arm.clone(), RewardSpec::new(RewardKind::Sar), 1, &agent).save(&path).unwrap();
        let mut loaded = Checkpoint::load(&path).unwrap().into_agent().unwrap();
        assert_eq!(loaded.fingerprint(), agent.fingerprint());
        for _ in 0..100 {
            let o: Vec<f64> = (0..arm.obs_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(loaded.act(&o, false).unwrap(), agent.act(&o, false).unwrap());
        }

        let text = std::fs::read_to_string(&path).unwrap();
        let mut ckpt: serde_json::Value = serde_json::from_str(&text).unwrap();
        ckpt["obs_layout"] = serde_json::Value::String("q,qdot,p,t".into());
        let err = Checkpoint::from_json(ckpt.to_string().as_bytes()).unwrap_err();
        assert!(err.to_string().contains("layout"));
        let truncated = &text.as_bytes()[..text.len() / 2];
        assert!(Checkpoint::from_json(truncated).is_err());
    }
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let cfg = AgentConfig {
            hidden: vec![16, 16],
            batch_size: 8,
            warmup_steps: 10,
            ..Default::default()
        };
        let mut agent = Sac::new(cfg, 3, 2, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut losses = Vec::new();
        for _ in 0..60 {
            let o: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = agent.act(&o, true).unwrap();
            if let Some(s) = agent.observe(&transition(o.clone(), a, 0.5, o, false)).unwrap() {
                losses.push((s.critic_loss, s.actor_loss));
            }
        }
        (losses, agent.fingerprint())
    };
    assert_eq!(run(), run());
}
