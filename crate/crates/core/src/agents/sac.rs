use super::checkpoint::{AgentSnapshot, RngState, SacSnapshot};
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
use std::f64::consts::{LN_2, PI};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Soft actor-critic with twin critics and a tanh-squashed Gaussian policy.
///
/// The actor outputs `[mean; log_std]`. Log-std is clipped to
/// `[LOG_STD_MIN, LOG_STD_MAX]` with zero gradient outside that band.
#[derive(Debug, Clone)]
pub struct Sac {
    cfg: AgentConfig,
    obs_dim: usize,
    act_dim: usize,
    actor: Mlp,
    critics: [Mlp; 2],
    critic_targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    log_alpha: f64,
    alpha_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

/// Reparameterized policy sample for a batch.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Pre-squash values `mean + std * eps`.
    pub pre_tanh: Vec<f64>,
    pub std: Vec<f64>,
    pub noise: Vec<f64>,
    /// Whether each log-std was inside the clip band.
    pub log_std_free: Vec<bool>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

impl Sac {
    pub fn new(cfg: AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = build_actor(&cfg, obs_dim, 2 * act_dim, Activation::Linear, &mut rng);
        let critics = [
            build_critic(&cfg, obs_dim + act_dim, &mut rng),
            build_critic(&cfg, obs_dim + act_dim, &mut rng),
        ];
        let n_critic = critics[0].num_params();
        Ok(Self {
            actor_opt: Adam::new(actor.num_params(), cfg.actor_lr),
            critic_opts: [Adam::new(n_critic, cfg.critic_lr), Adam::new(n_critic, cfg.critic_lr)],
            critic_targets: critics.clone(),
            log_alpha: cfg.temperature.ln(),
            alpha_opt: Adam::new(1, cfg.temperature_lr),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, obs_dim, act_dim),
            actor,
            critics,
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

    pub fn critics(&self) -> &[Mlp; 2] {
        &self.critics
    }

    pub fn critic_target_nets(&self) -> &[Mlp; 2] {
        &self.critic_targets
    }

    /// Replaces the networks, for instrumented tests.
    pub fn set_networks(&mut self, actor: Mlp, critics: [Mlp; 2], targets: [Mlp; 2]) {
        self.actor = actor;
        self.critics = critics;
        self.critic_targets = targets;
    }

    pub fn temperature(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        -(self.act_dim as f64)
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn split_head(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let n = self.act_dim;
        let mut mean = Vec::with_capacity(out.len() / 2);
        let mut log_std = Vec::with_capacity(out.len() / 2);
        let mut free = Vec::with_capacity(out.len() / 2);
        for row in out.chunks_exact(2 * n) {
            mean.extend_from_slice(&row[..n]);
            for &s in &row[n..] {
                free.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&s));
                log_std.push(s.clamp(LOG_STD_MIN, LOG_STD_MAX));
            }
        }
        (mean, log_std, free)
    }

    /// Squashed Gaussian sample from actor output rows with the given unit noise.
    pub fn sample_from_output(&self, out: &[f64], noise: &[f64]) -> PolicySample {
        let n = self.act_dim;
        let (mean, log_std, free) = self.split_head(out);
        let rows = mean.len() / n;
        let mut s = PolicySample {
            actions: Vec::with_capacity(mean.len()),
            log_probs: Vec::with_capacity(rows),
            pre_tanh: Vec::with_capacity(mean.len()),
            std: Vec::with_capacity(mean.len()),
            noise: noise.to_vec(),
            log_std_free: free,
        };
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        for r in 0..rows {
            let mut lp = 0.0;
            for i in r * n..(r + 1) * n {
                let std = log_std[i].exp();
                let u = mean[i] + std * noise[i];
                lp += -0.5 * noise[i] * noise[i] - log_std[i] - half_log_2pi - log_one_minus_tanh_sq(u);
                s.pre_tanh.push(u);
                s.std.push(std);
                s.actions.push(u.tanh());
            }
            s.log_probs.push(lp);
        }
        s
    }

    fn draw_noise(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// `r + gamma * (1 - terminal) * (min_j Q'_j(s', a') - alpha * log pi(a'|s'))`
    /// with `a'` drawn from the current policy using the supplied unit noise.
    pub fn critic_targets_with_noise(&self, batch: &Batch, noise: &[f64]) -> Result<Vec<f64>, AgentError> {
        let out = self.actor.forward_batch(&batch.next_obs, batch.size)?;
        let next = self.sample_from_output(out.output(), noise);
        let x = concat_rows(&batch.next_obs, self.obs_dim, &next.actions, self.act_dim);
        let q1 = self.critic_targets[0].forward_batch(&x, batch.size)?;
        let q2 = self.critic_targets[1].forward_batch(&x, batch.size)?;
        let alpha = self.temperature();
        Ok((0..batch.size)
            .map(|i| {
                let soft_q = q1.output()[i].min(q2.output()[i]) - alpha * next.log_probs[i];
                batch.rewards[i] + self.cfg.gamma * (1.0 - batch.terminals[i]) * soft_q
            })
            .collect())
    }

    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats, AgentError> {
        let n = batch.size;
        let scale = 1.0 / n as f64;
        let noise = self.draw_noise(n * self.act_dim);
        let targets = self.critic_targets_with_noise(batch, &noise)?;

        let x = concat_rows(&batch.obs, self.obs_dim, &batch.actions, self.act_dim);
        let mut critic_loss = 0.0;
        for j in 0..2 {
            let tape = self.critics[j].forward_batch(&x, n)?;
            let dq: Vec<f64> = tape
                .output()
                .iter()
                .zip(&targets)
                .map(|(q, y)| {
                    critic_loss += 0.5 * (q - y) * (q - y) * scale;
                    2.0 * (q - y) * scale
                })
                .collect();
            let mut grads = vec![0.0; self.critics[j].num_params()];
            self.critics[j].backward_batch(&tape, &dq, &mut grads)?;
            if !critic_loss.is_finite() {
                return Err(AgentError::Diverged { what: "critic loss", step: self.updates });
            }
            self.critic_opts[j].step(self.critics[j].params_mut(), &grads)?;
        }

        // Actor: minimize E[alpha * log pi(a|s) - min_j Q_j(s, a)].
        let alpha = self.temperature();
        let noise = self.draw_noise(n * self.act_dim);
        let actor_tape = self.actor.forward_batch(&batch.obs, n)?;
        let pi = self.sample_from_output(actor_tape.output(), &noise);
        let x = concat_rows(&batch.obs, self.obs_dim, &pi.actions, self.act_dim);
        let t1 = self.critics[0].forward_batch(&x, n)?;
        let t2 = self.critics[1].forward_batch(&x, n)?;
        let first_is_min: Vec<bool> = t1.output().iter().zip(t2.output()).map(|(a, b)| a <= b).collect();
        let mut actor_loss = 0.0;
        for i in 0..n {
            let q = t1.output()[i].min(t2.output()[i]);
            actor_loss += (alpha * pi.log_probs[i] - q) * scale;
        }
        if !actor_loss.is_finite() {
            return Err(AgentError::Diverged { what: "actor loss", step: self.updates });
        }
        let d1: Vec<f64> = first_is_min.iter().map(|&m| if m { -scale } else { 0.0 }).collect();
        let d2: Vec<f64> = first_is_min.iter().map(|&m| if m { 0.0 } else { -scale }).collect();
        let mut scratch = vec![0.0; self.critics[0].num_params()];
        let dx1 = self.critics[0].backward_batch(&t1, &d1, &mut scratch)?;
        let dx2 = self.critics[1].backward_batch(&t2, &d2, &mut scratch)?;
        let width = self.obs_dim + self.act_dim;
        let da1 = slice_cols(&dx1, width, self.obs_dim, self.act_dim);
        let da2 = slice_cols(&dx2, width, self.obs_dim, self.act_dim);

        let k = self.act_dim;
        let mut d_out = vec![0.0; n * 2 * k];
        for r in 0..n {
            for c in 0..k {
                let i = r * k + c;
                let a = pi.actions[i];
                // d log pi / du = 2 tanh(u); d a / du = 1 - tanh(u)^2.
                let du = alpha * scale * 2.0 * a + (da1[i] + da2[i]) * (1.0 - a * a);
                d_out[r * 2 * k + c] = du;
                d_out[r * 2 * k + k + c] = if pi.log_std_free[i] {
                    du * pi.std[i] * pi.noise[i] - alpha * scale
                } else {
                    0.0
                };
            }
        }
        let mut actor_grads = vec![0.0; self.actor.num_params()];
        self.actor.backward_batch(&actor_tape, &d_out, &mut actor_grads)?;
        self.actor_opt.step(self.actor.params_mut(), &actor_grads)?;

        if self.cfg.auto_temperature {
            let mean_lp = pi.log_probs.iter().sum::<f64>() * scale;
            let grad = -(mean_lp + self.target_entropy());
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[grad])?;
            self.log_alpha = la[0];
        }

        for j in 0..2 {
            let (online, target) = (&self.critics[j], &mut self.critic_targets[j]);
            target.soft_update(online, self.cfg.tau)?;
        }
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            temperature: Some(self.temperature()),
        })
    }

    pub(crate) fn snapshot_state(&self) -> SacSnapshot {
        SacSnapshot {
            config: self.cfg.clone(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            actor: self.actor.clone(),
            critics: self.critics.clone(),
            critic_targets: self.critic_targets.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opts: self.critic_opts.clone(),
            log_alpha: self.log_alpha,
            alpha_opt: self.alpha_opt.clone(),
            rng: RngState::capture(&self.rng),
            steps: self.steps,
            updates: self.updates,
        }
    }

    /// Restores networks, optimizers, temperature and RNG; the replay buffer starts empty.
    pub fn from_snapshot(s: SacSnapshot) -> Result<Self, AgentError> {
        s.config.validate()?;
        if s.actor.input_dim() != s.obs_dim || s.actor.output_dim() != 2 * s.act_dim {
            return Err(AgentError::Checkpoint("actor shape does not match dims".into()));
        }
        for c in s.critics.iter().chain(&s.critic_targets) {
            if c.input_dim() != s.obs_dim + s.act_dim || c.output_dim() != 1 {
                return Err(AgentError::Checkpoint("critic shape does not match dims".into()));
            }
        }
        Ok(Self {
            buffer: ReplayBuffer::new(s.config.buffer_capacity, s.obs_dim, s.act_dim),
            rng: s.rng.restore()?,
            cfg: s.config,
            obs_dim: s.obs_dim,
            act_dim: s.act_dim,
            actor: s.actor,
            critics: s.critics,
            critic_targets: s.critic_targets,
            actor_opt: s.actor_opt,
            critic_opts: s.critic_opts,
            log_alpha: s.log_alpha,
            alpha_opt: s.alpha_opt,
            steps: s.steps,
            updates: s.updates,
        })
    }
}

impl Agent for Sac {
    fn act(&mut self, observation: &[f64], explore: bool) -> Result<Vec<f64>, AgentError> {
        check_obs(self.obs_dim, observation)?;
        if explore && self.steps < self.cfg.warmup_steps {
            return Ok((0..self.act_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect());
        }
        let out = self.actor.predict(observation)?;
        if explore {
            let noise = self.draw_noise(self.act_dim);
            Ok(self.sample_from_output(&out, &noise).actions)
        } else {
            Ok(out[..self.act_dim].iter().map(|m| m.tanh()).collect())
        }
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
            self.critics[0].params(),
            self.critics[1].params(),
            self.critic_targets[0].params(),
            self.critic_targets[1].params(),
            std::slice::from_ref(&self.log_alpha),
        ])
    }

    fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot::Sac(Box::new(self.snapshot_state()))
    }
}
