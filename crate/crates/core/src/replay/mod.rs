//! Proportional prioritized replay that keeps demonstration data forever.

mod buffer;
mod sum_tree;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use buffer::{Batch, BufferDump, PrioritizedBuffer, PriorityConfig};
pub use sum_tree::SumTree;

/// Multi-step return information attached when the N-step loss is enabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NStepInfo {
    /// `sum_{i < len} gamma^i r_{t+i}`
    pub discounted_return: f64,
    /// `s_{t+len}`
    pub state: Vec<f64>,
    pub len: usize,
    /// The episode terminated inside the window, so there is no bootstrap term.
    pub terminal: bool,
}

/// One environment step as stored in replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// The action came from the expert.
    pub is_demo: bool,
    /// Which bootstrapped heads may train on this transition.
    pub mask: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_step: Option<NStepInfo>,
}

/// Bootstrap mask with i.i.d. `Bernoulli(p)` entries.
///
/// With `p >= 1` every head sees every transition. For `p < 1` an all-false
/// draw is rejected and redrawn, since no head could learn from it.
pub fn draw_mask<R: Rng + ?Sized>(rng: &mut R, heads: usize, p: f64) -> Vec<bool> {
    if p >= 1.0 {
        return vec![true; heads];
    }
    assert!(p > 0.0, "mask probability must be positive");
    loop {
        let mask: Vec<bool> = (0..heads).map(|_| rng.random_bool(p)).collect();
        if mask.iter().any(|&m| m) {
            return mask;
        }
    }
}

/// Delays transitions of the current episode until their N-step returns are
/// known, then emits them with [`NStepInfo`] filled in.
#[derive(Clone, Debug)]
pub struct NStepAccumulator {
    n: usize,
    gamma: f64,
    pending: VecDeque<Transition>,
}

impl NStepAccumulator {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1);
        Self {
            n,
            gamma,
            pending: VecDeque::new(),
        }
    }

    /// Adds the next transition of the episode. `episode_done` marks the last
    /// step (terminal or truncated); every pending transition is then released.
    pub fn push(&mut self, t: Transition, episode_done: bool) -> Vec<Transition> {
        self.pending.push_back(t);
        let mut ready = Vec::new();
        if episode_done {
            while !self.pending.is_empty() {
                ready.push(self.release_front());
            }
        } else if self.pending.len() >= self.n {
            ready.push(self.release_front());
        }
        ready
    }

    fn release_front(&mut self) -> Transition {
        let len = self.pending.len().min(self.n);
        let mut ret = 0.0;
        let mut discount = 1.0;
        for t in self.pending.iter().take(len) {
            ret += discount * t.reward;
            discount *= self.gamma;
        }
        let last = &self.pending[len - 1];
        let info = NStepInfo {
            discounted_return: ret,
            state: last.next_state.clone(),
            len,
            terminal: last.terminal,
        };
        let mut front = self.pending.pop_front().expect("non-empty");
        front.n_step = Some(info);
        front
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}
