use super::checkpoint::{AgentSnapshot, DdpgSnapshot, RngState};
use super::replay::{Batch, ReplayBuffer};
use super::{
    build_actor, build_critic, check_obs, concat_rows, fingerprint_params, slice_cols, Agent,
    AgentConfig, AgentError, UpdateStats,
};
use crate::arm_env::Transition;
use crate::neuro::{Activation, Adam, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deep deterministic policy gradient with clipped Gaussian exploration.
#[derive(Debug, Clone)]
pub struct Ddpg {
    cfg: AgentConfig,
    obs_dim: usize,
    act_dim: usize,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl Ddpg {
    pub fn new(cfg: AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = build_actor(&cfg, obs_dim, act_dim, Activation::Tanh, &mut rng);
        let critic = build_critic(&cfg, obs_dim + act_dim, &mut rng);
        Ok(Self {
            actor_opt: Adam::new(actor.num_params(), cfg.actor_lr),
            critic_opt: Adam::new(critic.num_params(), cfg.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, obs_dim, act_dim),
            actor,
            critic,
            rng,
            cfg,
            obs_dim,
            act_dim,
            steps: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Online critic value at one (observation, action) pair.
    pub fn q_value(&self, obs: &[f64], action: &[f64]) -> Result<f64, AgentError> {
        let x = concat_rows(obs, self.obs_dim, action, self.act_dim);
        Ok(self.critic.predict(&x)?[0])
    }

    /// Regression targets `r + gamma * (1 - terminal) * Q'(s', mu'(s'))`.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        let next_act = self.actor_target.forward_batch(&batch.next_obs, batch.size)?;
        let x = concat_rows(&batch.next_obs, self.obs_dim, next_act.output(), self.act_dim);
        let q_next = self.critic_target.forward_batch(&x, batch.size)?;
        Ok(batch
            .rewards
            .iter()
            .zip(&batch.terminals)
            .zip(q_next.output())
            .map(|((r, d), q)| r + self.cfg.gamma * (1.0 - d) * q)
            .collect())
    }

    /// One critic step, one actor step, then target soft-updates.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats, AgentError> {
        let n = batch.size;
        let scale = 1.0 / n as f64;
        let targets = self.critic_targets(batch)?;

        let x = concat_rows(&batch.obs, self.obs_dim, &batch.actions, self.act_dim);
        let tape = self.critic.forward_batch(&x, n)?;
        let mut critic_loss = 0.0;
        let dq: Vec<f64> = tape
            .output()
            .iter()
            .zip(&targets)
            .map(|(q, y)| {
                critic_loss += (q - y) * (q - y) * scale;
                2.0 * (q - y) * scale
            })
            .collect();
        if !critic_loss.is_finite() {
            return Err(AgentError::Diverged { what: "critic loss", step: self.updates });
        }
        let mut grads = vec![0.0; self.critic.num_params()];
        self.critic.backward_batch(&tape, &dq, &mut grads)?;
        self.critic_opt.step(self.critic.params_mut(), &grads)?;

        let actor_tape = self.actor.forward_batch(&batch.obs, n)?;
        let x = concat_rows(&batch.obs, self.obs_dim, actor_tape.output(), self.act_dim);
        let q_tape = self.critic.forward_batch(&x, n)?;
        let actor_loss = -q_tape.output().iter().sum::<f64>() * scale;
        if !actor_loss.is_finite() {
            return Err(AgentError::Diverged { what: "actor loss", step: self.updates });
        }
        let mut scratch = vec![0.0; self.critic.num_params()];
        let dx = self.critic.backward_batch(&q_tape, &vec![-scale; n], &mut scratch)?;
        let da = slice_cols(&dx, self.obs_dim + self.act_dim, self.obs_dim, self.act_dim);
        let mut actor_grads = vec![0.0; self.actor.num_params()];
        self.actor.backward_batch(&actor_tape, &da, &mut actor_grads)?;
        self.actor_opt.step(self.actor.params_mut(), &actor_grads)?;

        self.critic_target.soft_update(&self.critic, self.cfg.tau)?;
        self.actor_target.soft_update(&self.actor, self.cfg.tau)?;
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            temperature: None,
        })
    }

    pub(crate) fn snapshot_state(&self) -> DdpgSnapshot {
        DdpgSnapshot {
            config: self.cfg.clone(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_target: self.actor_target.clone(),
            critic_target: self.critic_target.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            rng: RngState::capture(&self.rng),
            steps: self.steps,
            updates: self.updates,
        }
    }

    /// Restores networks, optimizers and RNG; the replay buffer starts empty.
    pub fn from_snapshot(s: DdpgSnapshot) -> Result<Self, AgentError> {
        s.config.validate()?;
        let nets = [&s.actor, &s.critic, &s.actor_target, &s.critic_target];
        let expect_in = [s.obs_dim, s.obs_dim + s.act_dim, s.obs_dim, s.obs_dim + s.act_dim];
        let expect_out = [s.act_dim, 1, s.act_dim, 1];
        for ((net, i), o) in nets.iter().zip(expect_in).zip(expect_out) {
            if net.input_dim() != i || net.output_dim() != o {
                return Err(AgentError::Checkpoint("network shapes do not match dims".into()));
            }
        }
        Ok(Self {
            buffer: ReplayBuffer::new(s.config.buffer_capacity, s.obs_dim, s.act_dim),
            rng: s.rng.restore()?,
            cfg: s.config,
            obs_dim: s.obs_dim,
            act_dim: s.act_dim,
            actor: s.actor,
            critic: s.critic,
            actor_target: s.actor_target,
            critic_target: s.critic_target,
            actor_opt: s.actor_opt,
            critic_opt: s.critic_opt,
            steps: s.steps,
            updates: s.updates,
        })
    }
}

impl Agent for Ddpg {
    fn act(&mut self, observation: &[f64], explore: bool) -> Result<Vec<f64>, AgentError> {
        check_obs(self.obs_dim, observation)?;
        if explore && self.steps < self.cfg.warmup_steps {
            return Ok((0..self.act_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect());
        }
        let mut a = self.actor.predict(observation)?;
        if explore {
            for v in &mut a {
                let z: f64 = self.rng.sample(StandardNormal);
                *v = (*v + self.cfg.exploration_noise * z).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    fn observe(&mut self, t: &Transition) -> Result<Option<UpdateStats>, AgentError> {
        self.buffer.push(t);
        self.steps += 1;
        if self.steps < self.cfg.warmup_steps {
            return Ok(None);
        }
        match self.buffer.sample(self.cfg.batch_size, &mut self.rng) {
            Some(batch) => self.update(&batch).map(Some),
            None => Ok(None),
        }
    }

    fn fingerprint(&self) -> u64 {
        fingerprint_params([
            self.actor.params(),
            self.critic.params(),
            self.actor_target.params(),
            self.critic_target.params(),
        ])
    }

    fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot::Ddpg(Box::new(self.snapshot_state()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::RewardInputs;

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            hidden: vec![16, 16],
            batch_size: 8,
            warmup_steps: 20,
            ..Default::default()
        }
    }

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

    #[test]
    fn warmup_leaves_parameters_untouched() {
        let mut agent = Ddpg::new(small_cfg(), 3, 2, 5).unwrap();
        let before = agent.fingerprint();
        for i in 0..19 {
            let t = transition(vec![i as f64; 3], vec![0.1, 0.2], 1.0, vec![0.0; 3], false);
            assert!(agent.observe(&t).unwrap().is_none());
        }
        assert_eq!(agent.buffer().len(), 19);
        assert_eq!(agent.fingerprint(), before);
        let t = transition(vec![0.5; 3], vec![0.1, 0.2], 1.0, vec![0.0; 3], false);
        assert!(agent.observe(&t).unwrap().is_some());
        assert_ne!(agent.fingerprint(), before);
    }

    #[test]
    fn greedy_is_deterministic_and_bounded() {
        let mut agent = Ddpg::new(small_cfg(), 3, 2, 6).unwrap();
        let obs = [0.3, -0.7, 2.0];
        let a1 = agent.act(&obs, false).unwrap();
        let a2 = agent.act(&obs, false).unwrap();
        assert_eq!(a1, a2);
        for _ in 0..100 {
            let a = agent.act(&obs, true).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(agent.act(&[0.0; 2], false).is_err());
    }

    #[test]
    fn bellman_targets_match_hand_arithmetic() {
        let agent = Ddpg::new(small_cfg(), 2, 1, 7).unwrap();
        let batch = Batch {
            size: 3,
            obs: vec![0.0; 6],
            actions: vec![0.0; 3],
            rewards: vec![1.0, -2.0, 0.5],
            next_obs: vec![0.1, 0.2, -0.3, 0.4, 0.9, -0.9],
            terminals: vec![0.0, 1.0, 0.0],
        };
        let targets = agent.critic_targets(&batch).unwrap();
        for i in 0..3 {
            let s = &batch.next_obs[i * 2..i * 2 + 2];
            let a = agent.actor_target().predict(s).unwrap();
            let q = agent.critic_target().predict(&[s[0], s[1], a[0]]).unwrap()[0];
            let y = batch.rewards[i] + 0.98 * (1.0 - batch.terminals[i]) * q;
            assert!((targets[i] - y).abs() <= 1e-12);
        }
        assert_eq!(targets[1], -2.0);
    }
}
