use crate::arm_env::Transition;
use rand::Rng;

/// Fixed-capacity ring of transitions with uniform sampling.
///
/// Only what the learners need is kept: observation, action, reward,
/// next observation, and whether the next state is terminal.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    next: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    terminals: Vec<f64>,
}

/// A sampled minibatch in row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// 1.0 where the episode truly terminated (target reached), else 0.0.
    pub terminals: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            len: 0,
            next: 0,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            terminals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a transition. Time-limit truncation is not terminal: only a
    /// success ends the bootstrap.
    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.observation.len(), self.obs_dim);
        assert_eq!(t.next_observation.len(), self.obs_dim);
        assert_eq!(t.action.len(), self.act_dim);
        let terminal = if t.success { 1.0 } else { 0.0 };
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.observation);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_observation);
            self.terminals.push(terminal);
            self.len += 1;
        } else {
            let i = self.next;
            self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.observation);
            self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]
                .copy_from_slice(&t.next_observation);
            self.terminals[i] = terminal;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform indices with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<usize> {
        (0..size).map(|_| rng.random_range(0..self.len)).collect()
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let mut b = Batch {
            size: indices.len(),
            obs: Vec::with_capacity(indices.len() * self.obs_dim),
            actions: Vec::with_capacity(indices.len() * self.act_dim),
            rewards: Vec::with_capacity(indices.len()),
            next_obs: Vec::with_capacity(indices.len() * self.obs_dim),
            terminals: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            b.obs.extend_from_slice(&self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.actions.extend_from_slice(&self.actions[i * self.act_dim..(i + 1) * self.act_dim]);
            b.rewards.push(self.rewards[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.terminals.push(self.terminals[i]);
        }
        b
    }

    /// `None` until at least `size` transitions are stored.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Option<Batch> {
        if self.len < size || size == 0 {
            return None;
        }
        Some(self.gather(&self.sample_indices(size, rng)))
    }
}
