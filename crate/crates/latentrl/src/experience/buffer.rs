use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::{ExpError, Result, Transition};
use crate::diffmath::Tensor;

struct Stored {
    obs: Vec<f64>,
    action: Vec<f64>,
    reward: f64,
    next_obs: Vec<f64>,
    terminal: bool,
    timeout: bool,
    episode: u64,
    step: u32,
}

/// Fixed-capacity ring buffer of transitions with contiguous sequence
/// sampling. Windows never span an episode boundary; overwriting at capacity
/// silently truncates the oldest episode, whose remaining transitions stay
/// valid.
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    items: Vec<Stored>,
    write: usize,
    episode: u64,
    step_in_episode: u32,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            items: Vec::with_capacity(capacity),
            write: 0,
            episode: 0,
            step_in_episode: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(ExpError::Dim {
                what: "observation",
                expected: self.obs_dim,
                got: t.obs.len(),
            });
        }
        if t.action.len() != self.act_dim {
            return Err(ExpError::Dim {
                what: "action",
                expected: self.act_dim,
                got: t.action.len(),
            });
        }
        if t.terminal && t.timeout {
            return Err(ExpError::TerminalAndTimeout);
        }
        let ends_episode = t.terminal || t.timeout;
        let stored = Stored {
            obs: t.obs,
            action: t.action,
            reward: t.reward,
            next_obs: t.next_obs,
            terminal: t.terminal,
            timeout: t.timeout,
            episode: self.episode,
            step: self.step_in_episode,
        };
        if self.items.len() < self.capacity {
            self.items.push(stored);
        } else {
            self.items[self.write] = stored;
        }
        self.write = (self.write + 1) % self.capacity;
        if ends_episode {
            self.episode += 1;
            self.step_in_episode = 0;
        } else {
            self.step_in_episode += 1;
        }
        Ok(())
    }

    /// Map chronological index (0 = oldest) to storage index.
    fn physical(&self, logical: usize) -> usize {
        if self.items.len() < self.capacity {
            logical
        } else {
            (self.write + logical) % self.capacity
        }
    }

    fn window_valid(&self, start: usize, k: usize) -> bool {
        let first = &self.items[self.physical(start)];
        for offset in 1..k {
            let t = &self.items[self.physical(start + offset)];
            if t.episode != first.episode || t.step != first.step + offset as u32 {
                return false;
            }
        }
        true
    }

    /// Chronological start indices of every valid length-`k` window.
    pub fn valid_window_starts(&self, k: usize) -> Vec<usize> {
        if k == 0 || self.items.len() < k {
            return Vec::new();
        }
        (0..=self.items.len() - k)
            .filter(|s| self.window_valid(*s, k))
            .collect()
    }

    /// Uniform sample of `batch` contiguous windows of length `k`.
    ///
    /// Rejection sampling keeps the draw exactly uniform over valid starts;
    /// if the buffer is so fragmented that rejections keep failing, it falls
    /// back to enumerating the valid starts.
    pub fn sample_sequences(
        &self,
        batch: usize,
        k: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<SequenceBatch> {
        if k == 0 || batch == 0 {
            return Err(ExpError::Config("batch and K must be positive".into()));
        }
        if self.items.len() < k {
            return Err(ExpError::NoValidWindow { k });
        }
        let candidates = self.items.len() - k + 1;
        let mut starts = Vec::with_capacity(batch);
        let budget = batch * 64;
        let mut attempts = 0;
        while starts.len() < batch && attempts < budget {
            attempts += 1;
            let s = rng.gen_range(0..candidates);
            if self.window_valid(s, k) {
                starts.push(s);
            }
        }
        if starts.len() < batch {
            let valid = self.valid_window_starts(k);
            if valid.is_empty() {
                return Err(ExpError::NoValidWindow { k });
            }
            while starts.len() < batch {
                starts.push(valid[rng.gen_range(0..valid.len())]);
            }
        }
        Ok(self.gather(&starts, k))
    }

    fn gather(&self, starts: &[usize], k: usize) -> SequenceBatch {
        let batch = starts.len();
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut out = SequenceBatch {
            batch,
            k,
            obs_dim: od,
            act_dim: ad,
            obs: vec![0.0; (k + 1) * batch * od],
            actions: vec![0.0; k * batch * ad],
            rewards: vec![0.0; k * batch],
            terminals: vec![0.0; k * batch],
            timeouts: vec![0.0; k * batch],
        };
        for (b, start) in starts.iter().enumerate() {
            for t in 0..k {
                let item = &self.items[self.physical(start + t)];
                out.obs[(t * batch + b) * od..(t * batch + b + 1) * od]
                    .copy_from_slice(&item.obs);
                out.actions[(t * batch + b) * ad..(t * batch + b + 1) * ad]
                    .copy_from_slice(&item.action);
                out.rewards[t * batch + b] = item.reward;
                out.terminals[t * batch + b] = item.terminal as u8 as f64;
                out.timeouts[t * batch + b] = item.timeout as u8 as f64;
                if t == k - 1 {
                    out.obs[((k) * batch + b) * od..((k) * batch + b + 1) * od]
                        .copy_from_slice(&item.next_obs);
                }
            }
        }
        out
    }
}

/// A batch of K-length contiguous transition windows in step-major layout:
/// `obs` holds K+1 observation planes of shape `[batch, obs_dim]`.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub batch: usize,
    pub k: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminals: Vec<f64>,
    timeouts: Vec<f64>,
}

impl SequenceBatch {
    /// Observations at window offset `t` (0..=K) as a detached tensor.
    pub fn obs(&self, t: usize) -> Tensor {
        assert!(t <= self.k);
        let plane = &self.obs[t * self.batch * self.obs_dim..(t + 1) * self.batch * self.obs_dim];
        Tensor::from_vec(vec![self.batch, self.obs_dim], plane.to_vec()).expect("plane shape")
    }

    /// All K+1 observation planes stacked into one `[(K+1)·batch, obs_dim]`
    /// tensor, plane-major: rows `[t·batch, (t+1)·batch)` hold offset `t`.
    pub fn obs_stacked(&self) -> Tensor {
        Tensor::from_vec(
            vec![(self.k + 1) * self.batch, self.obs_dim],
            self.obs.clone(),
        )
        .expect("plane shape")
    }

    /// Buffer actions at offset `t` (0..K).
    pub fn action(&self, t: usize) -> Tensor {
        assert!(t < self.k);
        let plane =
            &self.actions[t * self.batch * self.act_dim..(t + 1) * self.batch * self.act_dim];
        Tensor::from_vec(vec![self.batch, self.act_dim], plane.to_vec()).expect("plane shape")
    }

    /// Rewards at offset `t`, shaped `[batch]`.
    pub fn reward(&self, t: usize) -> Tensor {
        assert!(t < self.k);
        let plane = &self.rewards[t * self.batch..(t + 1) * self.batch];
        Tensor::from_vec(vec![self.batch], plane.to_vec()).expect("plane shape")
    }

    /// Bootstrap mask at offset `t`: 1 for transitions whose successor value
    /// should be used (non-terminal, including timeouts), 0 at true
    /// termination.
    pub fn bootstrap_mask(&self, t: usize) -> Tensor {
        assert!(t < self.k);
        let plane: Vec<f64> = self.terminals[t * self.batch..(t + 1) * self.batch]
            .iter()
            .map(|term| 1.0 - term)
            .collect();
        Tensor::from_vec(vec![self.batch], plane).expect("plane shape")
    }

    pub fn terminal_flags(&self, t: usize) -> &[f64] {
        &self.terminals[t * self.batch..(t + 1) * self.batch]
    }

    pub fn timeout_flags(&self, t: usize) -> &[f64] {
        &self.timeouts[t * self.batch..(t + 1) * self.batch]
    }
}
