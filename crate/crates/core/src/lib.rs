//! Active deep Q-learning with demonstration.
//!
//! A deep-Q agent that estimates its own uncertainty (Jensen-Shannon divergence
//! across bootstrapped heads, or the predictive variance of a noisy output
//! layer), decides online when to ask an expert for an action, and learns from
//! the demonstrated actions through a large-margin supervised loss on top of
//! prioritized double-DQN.
//!
//! Module map:
//!
//! * [`nn`]: tiny MLP engine (dense, noisy and multi-head layers, backprop, Adam).
//! * [`envs`]: Cart-Pole, Acrobot and Mountain Car.
//! * [`replay`]: proportional prioritized replay with permanent demonstrations.
//! * [`agent`]: double-DQN learner with the composite demonstration loss.
//! * [`uncertainty`]: the two state-uncertainty estimators.
//! * [`query`]: the rank-based adaptive query rule over a sliding window.
//! * [`expert`]: simulated experts and the human-expert adapter.
//! * [`harness`]: experiment orchestration, logging and the console bridge.

pub mod agent;
pub mod envs;
mod error;
pub mod expert;
pub mod harness;
pub mod nn;
pub mod query;
pub mod replay;
pub mod rng;
pub mod uncertainty;

pub use error::{Error, Result};
