//! When to ask the expert.
//!
//! The adaptive rule keeps the last `N_r` uncertainty values in a FIFO and in
//! an ordered multiset. A state triggers a query when its uncertainty is
//! strictly larger than the value at descending rank `floor(n * t_query)` of
//! the window, i.e. when it lies in the top `t_query` fraction of recent
//! uncertainties. Each query hands control to the expert for a short session
//! of consecutive steps, every one of which is charged against the budget.

mod ordered;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ordered::OrderedMultiset;

use crate::error::{contract, Result};

/// Sliding window of recent uncertainties with `O(log N_r)` rank queries.
#[derive(Clone, Debug)]
pub struct UncertaintyWindow {
    capacity: usize,
    fifo: VecDeque<f64>,
    index: OrderedMultiset,
}

/// Descending rank of the threshold inside a window of `n` values.
///
/// `t_query = 1` would index one past the end; it is clamped to the minimum.
pub fn threshold_rank(n: usize, t_query: f64) -> usize {
    ((n as f64 * t_query).floor() as usize).min(n.saturating_sub(1))
}

impl UncertaintyWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        Self {
            capacity,
            fifo: VecDeque::with_capacity(capacity),
            index: OrderedMultiset::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fifo(&self) -> impl Iterator<Item = f64> + '_ {
        self.fifo.iter().copied()
    }

    pub fn index(&self) -> &OrderedMultiset {
        &self.index
    }

    /// Current threshold, or `None` for an empty window.
    pub fn threshold(&self, t_query: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        self.index.kth_largest(threshold_rank(self.len(), t_query))
    }

    /// Decides whether `u` warrants a query, then records it in the window.
    ///
    /// An empty window always queries.
    pub fn should_query(&mut self, u: f64, t_query: f64) -> Result<bool> {
        Ok(self.decide(u, t_query)?.0)
    }

    /// Like [`should_query`](Self::should_query) but also returns the threshold used.
    pub fn decide(&mut self, u: f64, t_query: f64) -> Result<(bool, Option<f64>)> {
        if !u.is_finite() {
            return Err(contract(format!("uncertainty must be finite, got {u}")));
        }
        if !(0.0..=1.0).contains(&t_query) {
            return Err(contract(format!("t_query must lie in [0, 1], got {t_query}")));
        }
        let threshold = self.threshold(t_query);
        let ask = threshold.is_none_or(|th| u > th);
        self.observe(u)?;
        Ok((ask, threshold))
    }

    /// Records `u` without deciding, evicting the oldest value when full.
    pub fn observe(&mut self, u: f64) -> Result<()> {
        if !u.is_finite() {
            return Err(contract(format!("uncertainty must be finite, got {u}")));
        }
        if self.len() >= self.capacity {
            self.evict_oldest()?;
        }
        self.insert(u);
        Ok(())
    }

    fn insert(&mut self, u: f64) {
        self.fifo.push_back(u);
        self.index.insert(u);
    }

    /// Drops the oldest value from both structures.
    pub fn evict_oldest(&mut self) -> Result<f64> {
        let old = self
            .fifo
            .pop_front()
            .ok_or_else(|| contract("evict from an empty uncertainty window"))?;
        let removed = self.index.remove_one(old);
        debug_assert!(removed);
        Ok(old)
    }
}

/// How a method decides to query while budget remains.
#[derive(Clone, Debug)]
pub enum QueryCriterion {
    /// Never queries (plain DQN and offline DQfD).
    Never,
    /// Queries at every opportunity until the budget is spent.
    Greedy,
    /// Queries with a fixed probability per step.
    Bernoulli { probability: f64 },
    /// The adaptive rank-based rule.
    Uncertainty {
        t_query: f64,
        window: UncertaintyWindow,
    },
}

impl QueryCriterion {
    pub fn uncertainty(t_query: f64, window_size: usize) -> Self {
        QueryCriterion::Uncertainty {
            t_query,
            window: UncertaintyWindow::new(window_size),
        }
    }

    pub fn needs_uncertainty(&self) -> bool {
        matches!(self, QueryCriterion::Uncertainty { .. })
    }
}

/// Who acts at the current step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Control {
    Agent {
        /// The criterion was consulted and declined.
        consulted: bool,
        threshold: Option<f64>,
    },
    Expert {
        /// This step opened a new demonstration session.
        new_query: bool,
        threshold: Option<f64>,
    },
}

impl Control {
    pub fn is_expert(&self) -> bool {
        matches!(self, Control::Expert { .. })
    }
}

/// Query-rule parameters; the remaining budget lives in [`QueryController`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    pub t_query: f64,
    /// Window size `N_r`.
    pub window: usize,
    /// Consecutive expert steps granted per query.
    pub session_len: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            t_query: 0.1,
            window: 500,
            session_len: 5,
        }
    }
}

/// Budget and session bookkeeping around a [`QueryCriterion`].
#[derive(Clone, Debug)]
pub struct QueryController {
    criterion: QueryCriterion,
    budget: usize,
    session_len: usize,
    session_left: usize,
    charged: usize,
    queries: usize,
    consultations: u64,
}

impl QueryController {
    pub fn new(criterion: QueryCriterion, budget: usize, session_len: usize) -> Self {
        assert!(session_len >= 1);
        Self {
            criterion,
            budget,
            session_len,
            session_left: 0,
            charged: 0,
            queries: 0,
            consultations: 0,
        }
    }

    pub fn budget_left(&self) -> usize {
        self.budget
    }

    pub fn charged(&self) -> usize {
        self.charged
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    /// How many times the criterion itself was asked.
    pub fn consultations(&self) -> u64 {
        self.consultations
    }

    pub fn in_session(&self) -> bool {
        self.session_left > 0 && self.budget > 0
    }

    pub fn criterion(&self) -> &QueryCriterion {
        &self.criterion
    }

    pub fn needs_uncertainty(&self) -> bool {
        self.budget > 0 && self.criterion.needs_uncertainty()
    }

    /// Decides who acts at this step.
    ///
    /// During a session the expert keeps control and no new query can fire,
    /// but the uncertainty is still pushed into the window. With no budget
    /// left the criterion is not consulted at all.
    pub fn next_step<R: Rng + ?Sized>(&mut self, uncertainty: Option<f64>, rng: &mut R) -> Result<Control> {
        if self.budget == 0 {
            self.session_left = 0;
            return Ok(Control::Agent {
                consulted: false,
                threshold: None,
            });
        }
        if self.session_left > 0 {
            if let QueryCriterion::Uncertainty { window, .. } = &mut self.criterion {
                window.observe(require(uncertainty)?)?;
            }
            return Ok(Control::Expert {
                new_query: false,
                threshold: None,
            });
        }
        self.consultations += 1;
        let (ask, threshold) = match &mut self.criterion {
            QueryCriterion::Never => (false, None),
            QueryCriterion::Greedy => (true, None),
            QueryCriterion::Bernoulli { probability } => (rng.random_bool(probability.clamp(0.0, 1.0)), None),
            QueryCriterion::Uncertainty { t_query, window } => window.decide(require(uncertainty)?, *t_query)?,
        };
        if ask {
            self.session_left = self.session_len.min(self.budget);
            self.queries += 1;
            Ok(Control::Expert {
                new_query: true,
                threshold,
            })
        } else {
            Ok(Control::Agent {
                consulted: true,
                threshold,
            })
        }
    }

    /// Records one executed expert step against the budget.
    pub fn charge(&mut self) {
        debug_assert!(self.budget > 0);
        self.budget -= 1;
        self.charged += 1;
        self.session_left = self.session_left.saturating_sub(1);
    }

    /// The expert did not answer: the session ends and nothing is charged.
    pub fn abandon(&mut self) {
        self.session_left = 0;
    }

    /// Sessions never span episodes.
    pub fn end_episode(&mut self) {
        self.session_left = 0;
    }
}

fn require(u: Option<f64>) -> Result<f64> {
    u.ok_or_else(|| contract("uncertainty criterion needs an uncertainty value"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn window_with(values: &[f64], cap: usize) -> UncertaintyWindow {
        let mut w = UncertaintyWindow::new(cap);
        for &v in values {
            w.observe(v).unwrap();
        }
        w
    }

    #[test]
    fn hand_evaluated_rank_rule() {
        let base = [0.9, 0.7, 0.5, 0.3];
        let mut w = window_with(&base, 10);
        assert_eq!(w.threshold(0.5), Some(0.5));
        assert!(w.should_query(0.6, 0.5).unwrap());
        let mut w = window_with(&base, 10);
        assert!(!w.should_query(0.5, 0.5).unwrap());
    }

    #[test]
    fn zero_t_query_needs_a_new_maximum() {
        let mut w = window_with(&[0.2, 0.8, 0.4], 10);
        assert!(!w.should_query(0.8, 0.0).unwrap());
        assert!(w.should_query(0.81, 0.0).unwrap());
    }

    #[test]
    fn empty_window_queries() {
        let mut w = UncertaintyWindow::new(3);
        assert!(w.should_query(0.0, 0.5).unwrap());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn constant_stream_stops_querying() {
        let mut w = UncertaintyWindow::new(20);
        assert!(w.should_query(0.3, 0.1).unwrap());
        for _ in 0..100 {
            assert!(!w.should_query(0.3, 0.1).unwrap());
        }
    }

    #[test]
    fn eviction_keeps_newest() {
        let w = window_with(&[1.0, 2.0, 3.0], 2);
        assert_eq!(w.fifo().collect::<Vec<_>>(), vec![2.0, 3.0]);
        assert_eq!(w.index().to_sorted_vec(), vec![2.0, 3.0]);
    }

    #[test]
    fn duplicate_eviction_removes_one_instance() {
        let mut w = window_with(&[5.0, 5.0, 7.0], 3);
        assert_eq!(w.evict_oldest().unwrap(), 5.0);
        assert_eq!(w.index().to_sorted_vec(), vec![5.0, 7.0]);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn evict_from_empty_is_error() {
        assert!(UncertaintyWindow::new(2).evict_oldest().is_err());
    }

    #[test]
    fn rejects_non_finite_and_bad_threshold() {
        let mut w = UncertaintyWindow::new(2);
        assert!(w.should_query(f64::NAN, 0.1).is_err());
        assert!(w.should_query(0.1, 1.5).is_err());
    }

    #[test]
    fn session_is_capped_by_budget() {
        let mut q = QueryController::new(QueryCriterion::Greedy, 3, 5);
        let mut rng = seeded(0);
        let mut expert_steps = 0;
        for _ in 0..10 {
            if q.next_step(None, &mut rng).unwrap().is_expert() {
                q.charge();
                expert_steps += 1;
            }
        }
        assert_eq!(expert_steps, 3);
        assert_eq!(q.budget_left(), 0);
        assert_eq!(q.queries(), 1);
    }

    #[test]
    fn episode_end_cuts_session_short() {
        let mut q = QueryController::new(QueryCriterion::Greedy, 10, 5);
        let mut rng = seeded(0);
        for _ in 0..2 {
            assert!(q.next_step(None, &mut rng).unwrap().is_expert());
            q.charge();
        }
        q.end_episode();
        assert!(!q.in_session());
        assert_eq!(q.budget_left(), 8);
        assert_eq!(q.charged(), 2);
    }

    #[test]
    fn exhausted_budget_never_consults() {
        let mut q = QueryController::new(QueryCriterion::uncertainty(0.1, 10), 0, 5);
        let mut rng = seeded(0);
        for i in 0..50 {
            let c = q.next_step(Some(i as f64), &mut rng).unwrap();
            assert_eq!(
                c,
                Control::Agent {
                    consulted: false,
                    threshold: None
                }
            );
        }
        assert_eq!(q.consultations(), 0);
        if let QueryCriterion::Uncertainty { window, .. } = q.criterion() {
            assert!(window.is_empty());
        }
    }

    #[test]
    fn session_steps_feed_the_window_without_new_queries() {
        let mut q = QueryController::new(QueryCriterion::uncertainty(0.5, 100), 100, 5);
        let mut rng = seeded(0);
        let first = q.next_step(Some(1.0), &mut rng).unwrap();
        assert_eq!(
            first,
            Control::Expert {
                new_query: true,
                threshold: None
            }
        );
        q.charge();
        for u in [5.0, 6.0, 7.0, 8.0] {
            let c = q.next_step(Some(u), &mut rng).unwrap();
            assert!(matches!(c, Control::Expert { new_query: false, .. }));
            q.charge();
        }
        assert_eq!(q.queries(), 1);
        if let QueryCriterion::Uncertainty { window, .. } = q.criterion() {
            assert_eq!(window.len(), 5);
        }
        assert!(!q.in_session());
    }

    #[test]
    fn abandoned_query_is_not_charged() {
        let mut q = QueryController::new(QueryCriterion::Greedy, 4, 5);
        let mut rng = seeded(0);
        assert!(q.next_step(None, &mut rng).unwrap().is_expert());
        q.abandon();
        assert_eq!(q.budget_left(), 4);
        assert!(!q.in_session());
    }
}
