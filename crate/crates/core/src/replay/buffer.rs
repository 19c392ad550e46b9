use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SumTree, Transition};
use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityConfig {
    /// Priority exponent.
    pub alpha: f64,
    /// Base priority added to every |TD error|.
    pub eps_agent: f64,
    /// Extra priority for demonstration entries.
    pub eps_demo: f64,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            eps_agent: 0.001,
            eps_demo: 1.0,
        }
    }
}

/// Entry ids and importance weights of one sampled minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Prioritized replay over a fixed number of slots.
///
/// Demonstration entries are never evicted; when the buffer is full the
/// oldest agent entry is overwritten.
#[derive(Clone, Debug)]
pub struct PrioritizedBuffer {
    capacity: usize,
    config: PriorityConfig,
    tree: SumTree,
    entries: Vec<Transition>,
    priorities: Vec<f64>,
    agent_fifo: VecDeque<usize>,
    demo_count: usize,
}

/// Serializable snapshot of a [`PrioritizedBuffer`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferDump {
    pub capacity: usize,
    pub config: PriorityConfig,
    pub entries: Vec<Transition>,
    pub priorities: Vec<f64>,
    pub agent_fifo: Vec<usize>,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, config: PriorityConfig) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            config,
            tree: SumTree::new(capacity),
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            priorities: Vec::with_capacity(capacity.min(1 << 16)),
            agent_fifo: VecDeque::new(),
            demo_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn config(&self) -> &PriorityConfig {
        &self.config
    }

    pub fn demo_count(&self) -> usize {
        self.demo_count
    }

    pub fn get(&self, id: usize) -> Result<&Transition> {
        self.entries.get(id).ok_or(Error::UnknownEntry(id))
    }

    pub fn entries(&self) -> &[Transition] {
        &self.entries
    }

    pub fn priority(&self, id: usize) -> Result<f64> {
        self.priorities.get(id).copied().ok_or(Error::UnknownEntry(id))
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    fn set_priority(&mut self, id: usize, p: f64) {
        self.priorities[id] = p;
        self.tree.set(id, p.powf(self.config.alpha), p);
    }

    /// Stores `t` at the current maximum priority (1 for the first entry).
    pub fn push(&mut self, t: Transition) -> Result<usize> {
        let p = if self.is_empty() {
            1.0
        } else {
            self.tree.max_raw()
        };
        let id = if self.entries.len() < self.capacity {
            self.entries.push(t);
            self.priorities.push(p);
            self.entries.len() - 1
        } else {
            let id = self
                .agent_fifo
                .pop_front()
                .ok_or(Error::BufferFullOfDemos(self.capacity))?;
            self.entries[id] = t;
            id
        };
        if self.entries[id].is_demo {
            self.demo_count += 1;
        } else {
            self.agent_fifo.push_back(id);
        }
        self.set_priority(id, p);
        Ok(id)
    }

    /// Stratified proportional sampling with max-normalized importance weights.
    ///
    /// `P(i) = p_i^alpha / sum_j p_j^alpha`, `w_i = (N P(i))^-beta / max_j w_j`
    /// where the maximum runs over the whole buffer.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, beta: f64, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let min_weight = self.tree.min_weight();
        let mut ids = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let mass = (i as f64 + rng.random::<f64>()) * segment;
            let id = self.tree.find(mass).min(self.len() - 1);
            // (N P(i))^-beta / (N P_min)^-beta
            let w = (self.tree.get(id) / min_weight).powf(-beta);
            ids.push(id);
            weights.push(w);
        }
        Ok(Batch { ids, weights })
    }

    /// `p_i = |delta_i| + eps_agent (+ eps_demo for demonstrations)`.
    pub fn update_priorities(&mut self, ids: &[usize], td_errors: &[f64]) -> Result<()> {
        if ids.len() != td_errors.len() {
            return Err(contract("ids and td_errors differ in length"));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.len()) {
            return Err(Error::UnknownEntry(bad));
        }
        for (&id, delta) in ids.iter().zip(td_errors) {
            let mut p = delta.abs() + self.config.eps_agent;
            if self.entries[id].is_demo {
                p += self.config.eps_demo;
            }
            self.set_priority(id, p);
        }
        Ok(())
    }

    pub fn dump(&self) -> BufferDump {
        BufferDump {
            capacity: self.capacity,
            config: self.config,
            entries: self.entries.clone(),
            priorities: self.priorities.clone(),
            agent_fifo: self.agent_fifo.iter().copied().collect(),
        }
    }

    pub fn restore(dump: BufferDump) -> Result<Self> {
        if dump.entries.len() != dump.priorities.len() || dump.entries.len() > dump.capacity {
            return Err(contract("inconsistent buffer dump"));
        }
        let mut buf = Self::new(dump.capacity, dump.config);
        buf.demo_count = dump.entries.iter().filter(|t| t.is_demo).count();
        buf.entries = dump.entries;
        buf.priorities = dump.priorities;
        buf.agent_fifo = dump.agent_fifo.into_iter().collect();
        for id in 0..buf.entries.len() {
            let p = buf.priorities[id];
            buf.set_priority(id, p);
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(demo: bool, tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: 0,
            reward: 0.0,
            next_state: vec![tag],
            terminal: false,
            is_demo: demo,
            mask: vec![true],
            n_step: None,
        }
    }

    fn linear(alpha: f64) -> PriorityConfig {
        PriorityConfig {
            alpha,
            eps_agent: 0.0,
            eps_demo: 1.0,
        }
    }

    #[test]
    fn first_push_has_unit_priority() {
        let mut b = PrioritizedBuffer::new(4, PriorityConfig::default());
        let id = b.push(t(false, 0.0)).unwrap();
        assert_eq!(b.priority(id).unwrap(), 1.0);
    }

    #[test]
    fn new_entries_get_current_max() {
        let mut b = PrioritizedBuffer::new(4, linear(1.0));
        b.push(t(false, 0.0)).unwrap();
        b.update_priorities(&[0], &[4.0]).unwrap();
        let id = b.push(t(false, 1.0)).unwrap();
        assert_eq!(b.priority(id).unwrap(), 4.0);
    }

    #[test]
    fn fifo_eviction_of_agent_entries() {
        let mut b = PrioritizedBuffer::new(3, PriorityConfig::default());
        for i in 0..3 {
            b.push(t(false, i as f64)).unwrap();
        }
        let id = b.push(t(false, 3.0)).unwrap();
        assert_eq!(id, 0);
        assert_eq!(b.len(), 3);
        let tags: Vec<f64> = b.entries().iter().map(|e| e.state[0]).collect();
        assert_eq!(tags, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn demos_survive_eviction_pressure() {
        let cap = 30;
        let mut b = PrioritizedBuffer::new(cap, PriorityConfig::default());
        for i in 0..10 {
            b.push(t(true, -(i as f64))).unwrap();
        }
        for i in 0..cap - 10 {
            b.push(t(false, i as f64)).unwrap();
        }
        for i in 0..5 {
            b.push(t(false, 100.0 + i as f64)).unwrap();
        }
        assert_eq!(b.entries().iter().filter(|e| e.is_demo).count(), 10);
        assert_eq!(b.demo_count(), 10);
        assert_eq!(b.len(), cap);
    }

    #[test]
    fn full_of_demos_rejects_push() {
        let mut b = PrioritizedBuffer::new(2, PriorityConfig::default());
        b.push(t(true, 0.0)).unwrap();
        b.push(t(true, 1.0)).unwrap();
        assert!(matches!(b.push(t(false, 2.0)), Err(Error::BufferFullOfDemos(2))));
    }

    #[test]
    fn priority_update_rules() {
        let mut b = PrioritizedBuffer::new(4, PriorityConfig::default());
        b.push(t(false, 0.0)).unwrap();
        b.push(t(true, 1.0)).unwrap();
        b.update_priorities(&[0, 1], &[0.0, 0.0]).unwrap();
        assert_eq!(b.priority(0).unwrap(), 0.001);
        assert_eq!(b.priority(1).unwrap(), 1.001);
        b.update_priorities(&[0], &[-2.0]).unwrap();
        assert_eq!(b.priority(0).unwrap(), 2.001);
        assert!(matches!(b.update_priorities(&[7], &[0.0]), Err(Error::UnknownEntry(7))));
    }

    #[test]
    fn equal_priorities_sample_uniformly_with_unit_weights() {
        let mut b = PrioritizedBuffer::new(8, PriorityConfig::default());
        for i in 0..8 {
            b.push(t(false, i as f64)).unwrap();
        }
        let mut rng = seeded(0);
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            let batch = b.sample(8, 0.4, &mut rng).unwrap();
            assert!(batch.weights.iter().all(|&w| w == 1.0));
            for id in batch.ids {
                counts[id] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 80_000.0 - 0.125).abs() < 0.005);
        }
    }

    #[test]
    fn importance_weight_hand_value() {
        let mut b = PrioritizedBuffer::new(4, linear(1.0));
        for i in 0..4 {
            b.push(t(false, i as f64)).unwrap();
        }
        // Priorities (1, 1, 1, 9) exactly.
        b.update_priorities(&[0, 1, 2, 3], &[1.0, 1.0, 1.0, 9.0]).unwrap();
        let mut rng = seeded(1);
        let mut seen = false;
        for _ in 0..100 {
            let batch = b.sample(4, 1.0, &mut rng).unwrap();
            for (id, w) in batch.ids.iter().zip(&batch.weights) {
                let total = 12.0;
                let p = b.priority(*id).unwrap() / total;
                let max_w = (4.0 * (1.0 / total)).powf(-1.0);
                let expected = (4.0 * p).powf(-1.0) / max_w;
                assert!((w - expected).abs() < 1e-9);
                if *id == 3 {
                    assert!((w - (4.0f64 * 0.75).powf(-1.0) / 3.0).abs() < 1e-9);
                    seen = true;
                }
            }
        }
        assert!(seen);
    }

    #[test]
    fn sample_from_empty_is_error() {
        let b = PrioritizedBuffer::new(4, PriorityConfig::default());
        assert!(matches!(b.sample(2, 0.4, &mut seeded(0)), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn dump_restore_preserves_state() {
        let mut b = PrioritizedBuffer::new(5, PriorityConfig::default());
        b.push(t(true, 0.0)).unwrap();
        for i in 0..6 {
            b.push(t(false, i as f64)).unwrap();
        }
        b.update_priorities(&[1, 2], &[0.5, 3.0]).unwrap();
        let json = serde_json::to_string(&b.dump()).unwrap();
        let mut r = PrioritizedBuffer::restore(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(r.dump(), b.dump());
        assert_eq!(r.tree().total(), b.tree().total());
        assert_eq!(r.demo_count(), 1);
        assert_eq!(r.push(t(false, 9.0)).unwrap(), b.clone().push(t(false, 9.0)).unwrap());
    }
}
