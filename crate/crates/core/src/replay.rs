//! Circular transition store with fixed-length window sampling.

use rand::Rng;

use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub episode_id: u64,
    pub step_index: usize,
}

/// `N` windows of up to `L` consecutive transitions from one episode each.
///
/// Slots past the end of a window's episode have `valid = 0`, zero action
/// and reward, and repeat the last valid next-state.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// `[N, |s|]`
    pub s: Tensor,
    /// `[N, L, |a|]`
    pub a: Tensor,
    /// `[N, L, |s|]`
    pub s_next: Tensor,
    /// `[N, L]`
    pub r: Tensor,
    /// `[N, L]`, 1 while the episode continues after sub-step `j`.
    pub cont: Tensor,
    /// `[N, L]`, 1 if sub-step `j` exists within the same episode.
    pub valid: Tensor,
    /// Buffer positions (oldest = 0) of each window's first transition.
    pub starts: Vec<usize>,
}

impl SequenceBatch {
    pub fn size(&self) -> usize {
        self.s.rows()
    }

    pub fn max_len(&self) -> usize {
        self.r.cols()
    }

    pub fn state_dim(&self) -> usize {
        self.s.cols()
    }

    pub fn action_dim(&self) -> usize {
        self.a.shape()[2]
    }

    pub fn is_valid(&self, row: usize, j: usize) -> bool {
        self.valid.at(row, j) > 0.5
    }

    /// Action block `[N, L·|a|]`.
    pub fn action_block(&self) -> Tensor {
        let n = self.size();
        self.a.clone().reshape(&[n, self.a.len() / n.max(1)]).unwrap()
    }

    /// Next state after sub-step `j` of `row`.
    pub fn next_state(&self, row: usize, j: usize) -> &[f64] {
        let sd = self.state_dim();
        let start = (row * self.max_len() + j) * sd;
        &self.s_next.data()[start..start + sd]
    }

    pub fn valid_len(&self, row: usize) -> usize {
        (0..self.max_len()).take_while(|&j| self.is_valid(row, j)).count()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    min_data: usize,
    items: Vec<Transition>,
    /// Physical index of the oldest item once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_data: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            min_data,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_data(&self) -> usize {
        self.min_data
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn can_sample(&self) -> bool {
        !self.items.is_empty() && self.items.len() >= self.min_data
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Item by age, 0 being the oldest.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        Some(&self.items[(self.head + i) % self.items.len()])
    }

    pub fn sample_batch(&self, n: usize, max_len: usize, rng: &mut impl Rng) -> Result<SequenceBatch> {
        if !self.can_sample() {
            return Err(Error::usage(format!(
                "replay holds {} transitions, need at least {} to sample",
                self.len(),
                self.min_data.max(1)
            )));
        }
        let starts: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.len())).collect();
        self.batch_from_starts(&starts, max_len)
    }

    /// Builds windows starting at the given buffer positions.
    pub fn batch_from_starts(&self, starts: &[usize], max_len: usize) -> Result<SequenceBatch> {
        if max_len == 0 {
            return Err(Error::config("window length must be positive"));
        }
        let first = self
            .get(0)
            .ok_or_else(|| Error::usage("cannot sample from an empty buffer"))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let n = starts.len();
        let mut s = Vec::with_capacity(n * sd);
        let mut a = vec![0.0; n * max_len * ad];
        let mut s_next = Vec::with_capacity(n * max_len * sd);
        let mut r = vec![0.0; n * max_len];
        let mut cont = vec![0.0; n * max_len];
        let mut valid = vec![0.0; n * max_len];
        for (row, &start) in starts.iter().enumerate() {
            let t0 = self
                .get(start)
                .ok_or_else(|| Error::usage(format!("start {start} beyond buffer")))?;
            s.extend_from_slice(&t0.state);
            let mut last_next: &[f64] = &t0.next_state;
            let mut alive = true;
            for j in 0..max_len {
                let item = self.get(start + j).filter(|t| {
                    t.episode_id == t0.episode_id && t.step_index == t0.step_index + j
                });
                match item {
                    Some(t) if alive => {
                        let k = row * max_len + j;
                        a[k * ad..(k + 1) * ad].copy_from_slice(&t.action);
                        r[k] = t.reward;
                        valid[k] = 1.0;
                        cont[k] = if t.terminal { 0.0 } else { 1.0 };
                        last_next = &t.next_state;
                        alive = !t.terminal;
                    }
                    _ => alive = false,
                }
                s_next.extend_from_slice(last_next);
            }
        }
        Ok(SequenceBatch {
            s: Tensor::matrix(n, sd, s),
            a: Tensor::new(vec![n, max_len, ad], a)?,
            s_next: Tensor::new(vec![n, max_len, sd], s_next)?,
            r: Tensor::matrix(n, max_len, r),
            cont: Tensor::matrix(n, max_len, cont),
            valid: Tensor::matrix(n, max_len, valid),
            starts: starts.to_vec(),
        })
    }
}
