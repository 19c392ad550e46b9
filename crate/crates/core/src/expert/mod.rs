//! Experts that answer queries: checkpoint-backed simulated experts and a
//! channel-backed adapter for a human at the console.

use std::fmt::Write as _;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, RenderState, Task};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, QNetwork};
use crate::replay::{draw_mask, Transition};
use crate::rng::Rng;

/// Everything known about the state the agent is asking about.
#[derive(Clone, Copy, Debug)]
pub struct QueryContext<'a> {
    pub step: u64,
    pub task: Task,
    pub state: &'a [f64],
    pub render_state: &'a RenderState,
    pub q_values: &'a [f64],
    pub uncertainty: Option<f64>,
    pub budget_left: usize,
}

/// Owned query details forwarded to the console.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub step: u64,
    pub task: Task,
    pub render_state: RenderState,
    pub q_values: Vec<f64>,
    pub uncertainty: Option<f64>,
    pub budget_left: usize,
    /// Unix time in milliseconds after which the answer is no longer awaited.
    pub deadline: u64,
}

/// Messages from a training thread to the console bridge.
#[derive(Debug)]
pub enum ConsoleMessage {
    /// An outstanding query; the answer goes back through `reply`.
    Query { payload: QueryPayload, reply: Sender<usize> },
    /// Passive state between queries.
    State { step: u64, task: Task, render_state: RenderState },
    /// A demonstrated step was executed and charged.
    Confirm { step: u64, action_id: usize, budget_left: usize },
    /// A new evaluation point.
    Curve { step: u64, score: f64 },
}

/// Blocking request/response link to a human expert.
///
/// Only one request is outstanding at a time because the training thread
/// waits for its answer. A timeout or a closed channel abandons the query.
#[derive(Clone, Debug)]
pub struct HumanAdapter {
    tx: Sender<ConsoleMessage>,
    timeout: Duration,
    num_actions: usize,
}

impl HumanAdapter {
    pub fn new(tx: Sender<ConsoleMessage>, timeout: Duration, num_actions: usize) -> Self {
        Self {
            tx,
            timeout,
            num_actions,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Sends a passive message; a missing console is not an error.
    pub fn notify(&self, message: ConsoleMessage) {
        let _ = self.tx.send(message);
    }

    pub fn ask(&self, ctx: &QueryContext<'_>) -> Result<usize> {
        let (reply, answer) = mpsc::channel();
        let deadline = SystemTime::now() + self.timeout;
        let payload = QueryPayload {
            step: ctx.step,
            task: ctx.task,
            render_state: ctx.render_state.clone(),
            q_values: ctx.q_values.to_vec(),
            uncertainty: ctx.uncertainty,
            budget_left: ctx.budget_left,
            deadline: deadline.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        };
        if self.tx.send(ConsoleMessage::Query { payload, reply }).is_err() {
            return Err(Error::QueryAbandoned);
        }
        match answer.recv_timeout(self.timeout) {
            Ok(a) if a < self.num_actions => Ok(a),
            Ok(_) | Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => Err(Error::QueryAbandoned),
        }
    }
}

/// Source of demonstrated actions.
#[derive(Clone, Debug)]
pub enum ExpertPolicy {
    /// Greedy action of a strong network.
    Perfect(QNetwork),
    /// The perfect action, replaced by a uniform random one with probability `p_random`.
    Noisy { net: QNetwork, p_random: f64 },
    /// Greedy action of an intermediate training checkpoint.
    WeakCheckpoint(QNetwork),
    /// Replays a fixed action list, cycling when exhausted.
    Scripted { actions: Vec<usize>, cursor: usize },
    Human(HumanAdapter),
}

impl ExpertPolicy {
    pub fn scripted(actions: Vec<usize>) -> Self {
        assert!(!actions.is_empty(), "scripted expert needs at least one action");
        ExpertPolicy::Scripted { actions, cursor: 0 }
    }

    pub fn network(&self) -> Option<&QNetwork> {
        match self {
            ExpertPolicy::Perfect(net) | ExpertPolicy::WeakCheckpoint(net) | ExpertPolicy::Noisy { net, .. } => Some(net),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExpertPolicy::Perfect(_) => "perfect",
            ExpertPolicy::Noisy { .. } => "noisy",
            ExpertPolicy::WeakCheckpoint(_) => "weak_checkpoint",
            ExpertPolicy::Scripted { .. } => "scripted",
            ExpertPolicy::Human(_) => "human",
        }
    }

    /// The expert's action at the queried state.
    ///
    /// Only the human adapter can fail with [`Error::QueryAbandoned`].
    pub fn demonstrate(&mut self, ctx: &QueryContext<'_>, rng: &mut Rng) -> Result<usize> {
        match self {
            ExpertPolicy::Perfect(net) | ExpertPolicy::WeakCheckpoint(net) => net.greedy_action(ctx.state),
            ExpertPolicy::Noisy { net, p_random } => {
                if *p_random > 0.0 && rng.random_bool(p_random.min(1.0)) {
                    Ok(rng.random_range(0..net.num_actions()))
                } else {
                    net.greedy_action(ctx.state)
                }
            }
            ExpertPolicy::Scripted { actions, cursor } => {
                let a = actions[*cursor % actions.len()];
                *cursor += 1;
                Ok(a)
            }
            ExpertPolicy::Human(adapter) => adapter.ask(ctx),
        }
    }

    /// Passive messages reach the console only for human experts.
    pub fn notify(&self, message: ConsoleMessage) {
        if let ExpertPolicy::Human(adapter) = self {
            adapter.notify(message);
        }
    }

    pub fn is_human(&self) -> bool {
        matches!(self, ExpertPolicy::Human(_))
    }
}

/// Evaluation statistics in the layout of an expert-statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertStats {
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub avg_steps: f64,
    /// Fraction of episodes judged solved by the selection rule's test.
    pub success_rate: f64,
}

/// One evaluation episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub ret: f64,
    pub len: usize,
    pub terminal: bool,
}

/// Runs `episodes` greedy episodes of `net` from a fresh generator seeded with `seed`.
pub fn evaluate_network(net: &QNetwork, task: Task, episodes: usize, seed: u64) -> Result<Vec<EpisodeOutcome>> {
    let mut env = Env::new(task);
    env.reset(seed);
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut state = if i == 0 { env.observe() } else { env.reset_next() };
        let mut ret = 0.0;
        loop {
            let step = env.step(net.greedy_action(&state)?)?;
            ret += step.reward;
            if step.done() {
                out.push(EpisodeOutcome {
                    ret,
                    len: env.steps(),
                    terminal: step.terminal,
                });
                break;
            }
            state = step.next_state;
        }
    }
    Ok(out)
}

/// Summary statistics over evaluation episodes (population standard deviation).
pub fn summarize(outcomes: &[EpisodeOutcome], solved: impl Fn(&EpisodeOutcome) -> bool) -> ExpertStats {
    let n = outcomes.len().max(1) as f64;
    let mean = outcomes.iter().map(|o| o.ret).sum::<f64>() / n;
    let var = outcomes.iter().map(|o| (o.ret - mean).powi(2)).sum::<f64>() / n;
    ExpertStats {
        episodes: outcomes.len(),
        mean,
        std: var.sqrt(),
        min: outcomes.iter().map(|o| o.ret).fold(f64::INFINITY, f64::min),
        max: outcomes.iter().map(|o| o.ret).fold(f64::NEG_INFINITY, f64::max),
        avg_steps: outcomes.iter().map(|o| o.len as f64).sum::<f64>() / n,
        success_rate: outcomes.iter().filter(|o| solved(o)).count() as f64 / n,
    }
}

/// Evaluates a network-backed expert over `episodes` greedy episodes.
pub fn evaluate_expert(expert: &ExpertPolicy, task: Task, episodes: usize, seed: u64) -> Result<ExpertStats> {
    let net = expert
        .network()
        .ok_or_else(|| Error::Contract(format!("cannot evaluate a {} expert offline", expert.kind())))?;
    let rule = ExpertSelectionRule::for_task(task);
    Ok(summarize(&evaluate_network(net, task, episodes, seed)?, |o| rule.is_solved(o)))
}

/// Criteria for picking a realistic, imperfect expert from a training run:
/// not perfect, low variance, and still solving nearly every episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertSelectionRule {
    /// The mean must stay strictly below this.
    pub max_mean: f64,
    /// The mean must reach at least this.
    pub min_mean: f64,
    pub std_cap: f64,
    pub min_success_rate: f64,
    /// Episodes with at least this return count as solved; `None` means
    /// "reached the goal before the time limit".
    pub min_episode_return: Option<f64>,
    pub episodes: usize,
}

impl ExpertSelectionRule {
    pub fn for_task(task: Task) -> Self {
        let spec = task.spec();
        match task {
            Task::CartPole => Self {
                max_mean: spec.target_score,
                min_mean: spec.target_score - 120.0,
                std_cap: 60.0,
                min_success_rate: 0.95,
                min_episode_return: Some(50.0),
                episodes: 100,
            },
            Task::Acrobot | Task::MountainCar => Self {
                max_mean: spec.target_score,
                min_mean: -(spec.max_episode_steps as f64),
                std_cap: 80.0,
                min_success_rate: 0.95,
                min_episode_return: None,
                episodes: 100,
            },
        }
    }

    pub fn is_solved(&self, o: &EpisodeOutcome) -> bool {
        match self.min_episode_return {
            Some(m) => o.ret >= m,
            None => o.terminal,
        }
    }

    pub fn accepts(&self, s: &ExpertStats) -> bool {
        s.mean < self.max_mean && s.mean >= self.min_mean && s.std <= self.std_cap && s.success_rate >= self.min_success_rate
    }
}

/// A training snapshot offered to [`select_weak_checkpoint`].
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub step: u64,
    pub net: QNetwork,
}

/// Evaluates every checkpoint, in parallel when the `parallel` feature is on.
pub fn evaluate_checkpoints(
    checkpoints: &[Checkpoint],
    task: Task,
    rule: &ExpertSelectionRule,
    seed: u64,
) -> Result<Vec<ExpertStats>> {
    let eval = |c: &Checkpoint| -> Result<ExpertStats> {
        let outcomes = evaluate_network(&c.net, task, rule.episodes, seed)?;
        Ok(summarize(&outcomes, |o| rule.is_solved(o)))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        checkpoints.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        checkpoints.iter().map(eval).collect()
    }
}

/// The earliest checkpoint accepted by `rule`, with its statistics.
pub fn select_weak_checkpoint(
    checkpoints: &[Checkpoint],
    task: Task,
    rule: &ExpertSelectionRule,
    seed: u64,
) -> Result<(Checkpoint, ExpertStats)> {
    let stats = evaluate_checkpoints(checkpoints, task, rule, seed)?;
    if let Some(i) = stats.iter().position(|s| rule.accepts(s)) {
        return Ok((checkpoints[i].clone(), stats[i].clone()));
    }
    let mut msg = format!("no checkpoint satisfies {rule:?}:");
    for (c, s) in checkpoints.iter().zip(&stats) {
        let _ = write!(
            msg,
            "\n  step {}: mean {:.2} std {:.2} min {:.0} success {:.2}",
            c.step, s.mean, s.std, s.min, s.success_rate
        );
    }
    Err(Error::NoQualifyingCheckpoint(msg))
}

/// Renders rows in the layout `Mean score/std | Min. score | Avg. steps | Target score`.
pub fn stats_table(rows: &[(Task, ExpertStats)]) -> String {
    let mut out = String::from("| Task | Mean score/std | Min. score | Avg. steps | Target score |\n|---|---|---|---|---|\n");
    for (task, s) in rows {
        let _ = writeln!(
            out,
            "| {} | {:.2}±{:.2} | {} | {:.2} | {} |",
            task.display_name(),
            s.mean,
            s.std,
            s.min,
            s.avg_steps,
            task.spec().target_score
        );
    }
    out
}

/// Runs the expert from fresh episodes until `count` transitions are
/// collected, marking each as a demonstration.
pub fn collect_demos(
    expert: &mut ExpertPolicy,
    task: Task,
    count: usize,
    heads: usize,
    mask_probability: f64,
    rng: &mut Rng,
) -> Result<Vec<Transition>> {
    let mut env = Env::new(task);
    env.reset(rng.random());
    let mut demos = Vec::with_capacity(count);
    let mut state = env.observe();
    while demos.len() < count {
        let render = env.render_state();
        let ctx = QueryContext {
            step: demos.len() as u64,
            task,
            state: &state,
            render_state: &render,
            q_values: &[],
            uncertainty: None,
            budget_left: count - demos.len(),
        };
        let action = expert.demonstrate(&ctx, rng)?;
        let step = env.step(action)?;
        demos.push(Transition {
            state: std::mem::take(&mut state),
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminal: step.terminal,
            is_demo: true,
            mask: draw_mask(rng, heads, mask_probability),
            n_step: None,
        });
        state = if step.done() { env.reset_next() } else { step.next_state };
    }
    Ok(demos)
}

/// A recorded demonstration set, stored in the checkpoint envelope with kind
/// `demonstrations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub task: Task,
    /// Expert kind that produced the transitions.
    pub expert: String,
    pub transitions: Vec<Transition>,
}

impl DemoSet {
    pub const KIND: &'static str = "demonstrations";

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        checkpoint::save(path, Self::KIND, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let set: Self = checkpoint::load(path, Self::KIND)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.task.spec();
        for (i, t) in self.transitions.iter().enumerate() {
            if t.state.len() != spec.obs_dim || t.next_state.len() != spec.obs_dim || t.action >= spec.num_actions {
                return Err(Error::Config(format!("demonstration {i} does not fit {}", self.task.name())));
            }
            if !t.is_demo {
                return Err(Error::Config(format!("transition {i} is not marked as a demonstration")));
            }
        }
        Ok(())
    }
}
