use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::agent::{ActMode, Agent, TrainDiagnostics};
use crate::envs::{Env, Task};
use crate::error::{Error, Result};
use crate::expert::{collect_demos, ConsoleMessage, ExpertPolicy, QueryContext};
use crate::nn::{HeadSelect, OutputKind, QNetwork};
use crate::query::{Control, QueryController, QueryCriterion};
use crate::replay::{draw_mask, NStepAccumulator, PrioritizedBuffer, Transition};
use crate::rng::derive;
use crate::uncertainty::q_and_uncertainty;

const STREAM_AGENT: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_QUERY: u64 = 4;
const STREAM_EXPERT: u64 = 5;
const STREAM_MASK: u64 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    /// Mean greedy return over the evaluation episodes.
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEvent {
    pub step: u64,
    pub uncertainty: Option<f64>,
    pub threshold: Option<f64>,
    /// Budget before the session started.
    pub budget_left: usize,
}

/// Outcome of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: Task,
    pub method: Method,
    pub variant: OutputKind,
    pub seed: u64,
    pub eval_points: Vec<EvalPoint>,
    pub query_events: Vec<QueryEvent>,
    /// First evaluation step whose score reached the target.
    pub steps_to_solve: Option<u64>,
    pub pretrain_demos: usize,
    pub online_budget: usize,
    /// Expert steps executed and charged during training.
    pub charged: usize,
    /// Queries the expert did not answer.
    pub abandoned: usize,
    /// Demonstration transitions stored in replay (offline plus online).
    pub demo_transitions: usize,
    /// The expert's backing network was unchanged by the run.
    pub expert_untouched: bool,
}

impl RunRecord {
    pub fn final_score(&self) -> Option<f64> {
        self.eval_points.last().map(|p| p.score)
    }

    pub fn total_demonstrations(&self) -> usize {
        self.pretrain_demos + self.charged
    }
}

/// Per-step diagnostics emitted while training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub action: usize,
    pub reward: f64,
    pub is_demo: bool,
    pub new_query: bool,
    pub uncertainty: Option<f64>,
    pub threshold: Option<f64>,
    pub budget_left: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainDiagnostics>,
}

/// Hooks for logging, streaming and checkpointing. All default to no-ops.
pub trait TrialObserver {
    fn on_step(&mut self, _log: &StepLog) {}
    fn on_eval(&mut self, _point: &EvalPoint, _net: &QNetwork) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl TrialObserver for NoObserver {}

/// Mean greedy return over `episodes` episodes.
pub fn evaluate_greedy(net: &QNetwork, env: &mut Env, episodes: usize) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = env.reset_next();
        loop {
            let step = env.step(net.greedy_action(&state)?)?;
            total += step.reward;
            if step.done() {
                break;
            }
            state = step.next_state;
        }
    }
    Ok(total / episodes as f64)
}

fn criterion(config: &ExperimentConfig, budget: usize) -> QueryCriterion {
    if budget == 0 {
        return QueryCriterion::Never;
    }
    match config.method {
        Method::Dqn | Method::Dqfd => QueryCriterion::Never,
        Method::Gdqn => QueryCriterion::Greedy,
        Method::Bdqn => QueryCriterion::Bernoulli {
            probability: (budget as f64 / config.training_steps.max(1) as f64).min(1.0),
        },
        Method::Adqn | Method::Adqnp => QueryCriterion::uncertainty(config.query.t_query, config.query.window),
    }
}

/// Runs one seed of `config`. `expert` is required by every method that uses
/// demonstrations.
pub fn run_trial(
    config: &ExperimentConfig,
    seed: u64,
    expert: Option<&ExpertPolicy>,
    observer: &mut dyn TrialObserver,
) -> Result<RunRecord> {
    run_trial_with(config, seed, expert, None, observer)
}

/// Like [`run_trial`], but pretrains on the first demonstrations of
/// `offline` instead of collecting them from the expert.
pub fn run_trial_with(
    config: &ExperimentConfig,
    seed: u64,
    expert: Option<&ExpertPolicy>,
    offline: Option<&[Transition]>,
    observer: &mut dyn TrialObserver,
) -> Result<RunRecord> {
    config.validate()?;
    let task = config.task;
    let spec = task.spec();
    let (pretrain_demos, online_budget) = config.method.demo_split(config.demonstrations);
    let needs_expert = online_budget > 0 || (pretrain_demos > 0 && offline.is_none());
    let mut expert = match (expert, needs_expert) {
        (Some(e), _) => Some(e.clone()),
        (None, false) => None,
        (None, true) => return Err(Error::Config(format!("{} needs an expert", config.method))),
    };
    let fingerprint_before = expert.as_ref().and_then(|e| e.network()).map(QNetwork::fingerprint);

    let mut agent = Agent::new(config.agent.clone(), spec.obs_dim, spec.num_actions, derive(seed, STREAM_AGENT))?;
    let heads = agent.online().num_heads();
    let mask_p = config.agent.mask_probability;
    let mut mask_rng = derive(seed, STREAM_MASK);
    let mut expert_rng = derive(seed, STREAM_EXPERT);
    let mut query_rng = derive(seed, STREAM_QUERY);
    let mut buffer = PrioritizedBuffer::new(config.memory_size, config.agent.priority);
    let mut demo_transitions = 0;

    if pretrain_demos > 0 {
        let mut demos = match offline {
            Some(d) if d.len() < pretrain_demos => {
                return Err(Error::Config(format!(
                    "{} offline demonstrations supplied, {pretrain_demos} needed",
                    d.len()
                )))
            }
            Some(d) => d[..pretrain_demos]
                .iter()
                .map(|t| Transition {
                    mask: draw_mask(&mut mask_rng, heads, mask_p),
                    n_step: None,
                    ..t.clone()
                })
                .collect(),
            None => {
                let e = expert.as_mut().expect("checked above");
                collect_demos(e, task, pretrain_demos, heads, mask_p, &mut expert_rng)?
            }
        };
        if config.agent.lambda_n_step != 0.0 {
            demos = attach_n_step(demos, config.agent.n_step, config.agent.gamma);
        }
        for t in demos {
            buffer.push(t)?;
            demo_transitions += 1;
        }
        agent.pretrain(&mut buffer, config.pretrain_steps)?;
    }

    let mut controller = QueryController::new(criterion(config, online_budget), online_budget, config.query.session_len);
    let mut n_step =
        (config.agent.lambda_n_step != 0.0).then(|| NStepAccumulator::new(config.agent.n_step, config.agent.gamma));
    let mut env = Env::new(task);
    let mut state = env.reset(derive(seed, STREAM_ENV).random::<u64>());
    let mut eval_env = Env::new(task);
    eval_env.reset(derive(seed, STREAM_EVAL).random::<u64>());
    agent.begin_episode();

    let mut record = RunRecord {
        task,
        method: config.method,
        variant: config.agent.variant,
        seed,
        eval_points: Vec::new(),
        query_events: Vec::new(),
        steps_to_solve: None,
        pretrain_demos,
        online_budget,
        charged: 0,
        abandoned: 0,
        demo_transitions: 0,
        expert_untouched: true,
    };

    for step in 1..=config.training_steps {
        let epsilon = config.agent.epsilon.value(step - 1);
        let (q_mean, uncertainty) = if controller.needs_uncertainty() || expert.as_ref().is_some_and(|e| e.is_human()) {
            let (q, u) = q_and_uncertainty(agent.online(), &state)?;
            (q, Some(u.value))
        } else {
            (Vec::new(), None)
        };
        let budget_before = controller.budget_left();
        let control = controller.next_step(uncertainty, &mut query_rng)?;
        let mut is_demo = false;
        let mut new_query = false;
        let threshold = match control {
            Control::Expert { threshold, .. } | Control::Agent { threshold, .. } => threshold,
        };
        let action = match control {
            Control::Expert {
                new_query: fresh,
                threshold: th,
            } => {
                new_query = fresh;
                let e = expert.as_mut().ok_or_else(|| Error::Config("query fired without an expert".into()))?;
                let render = env.render_state();
                let q_values = if q_mean.is_empty() {
                    agent.online().q_values(&state, HeadSelect::Mean)?
                } else {
                    q_mean.clone()
                };
                let ctx = QueryContext {
                    step,
                    task,
                    state: &state,
                    render_state: &render,
                    q_values: &q_values,
                    uncertainty,
                    budget_left: budget_before,
                };
                if fresh {
                    record.query_events.push(QueryEvent {
                        step,
                        uncertainty,
                        threshold: th,
                        budget_left: budget_before,
                    });
                }
                match e.demonstrate(&ctx, &mut expert_rng) {
                    Ok(a) => {
                        controller.charge();
                        is_demo = true;
                        e.notify(ConsoleMessage::Confirm {
                            step,
                            action_id: a,
                            budget_left: controller.budget_left(),
                        });
                        a
                    }
                    Err(Error::QueryAbandoned) => {
                        controller.abandon();
                        record.abandoned += 1;
                        agent.act(&state, ActMode::Train { epsilon })?
                    }
                    Err(other) => return Err(other),
                }
            }
            Control::Agent { .. } => agent.act(&state, ActMode::Train { epsilon })?,
        };

        let result = env.step(action)?;
        let transition = Transition {
            state: std::mem::take(&mut state),
            action,
            reward: result.reward,
            next_state: result.next_state.clone(),
            terminal: result.terminal,
            is_demo,
            mask: draw_mask(&mut mask_rng, heads, mask_p),
            n_step: None,
        };
        if is_demo {
            demo_transitions += 1;
        }
        match n_step.as_mut() {
            Some(acc) => {
                for t in acc.push(transition, result.done()) {
                    buffer.push(t)?;
                }
            }
            None => {
                buffer.push(transition)?;
            }
        }

        let train = if buffer.len() >= config.warmup.max(config.agent.batch_size) {
            Some(agent.train_step(&mut buffer, config.agent.beta.value(step - 1))?)
        } else {
            None
        };

        if let Some(e) = expert.as_ref().filter(|e| e.is_human()) {
            e.notify(ConsoleMessage::State {
                step,
                task,
                render_state: env.render_state(),
            });
        }
        observer.on_step(&StepLog {
            step,
            action,
            reward: result.reward,
            is_demo,
            new_query,
            uncertainty,
            threshold,
            budget_left: controller.budget_left(),
            epsilon,
            train,
        });

        if result.done() {
            controller.end_episode();
            state = env.reset_next();
            agent.begin_episode();
        } else {
            state = result.next_state;
        }

        if step % config.eval_period == 0 {
            let score = evaluate_greedy(agent.online(), &mut eval_env, config.eval_episodes)?;
            let point = EvalPoint { step, score };
            if record.steps_to_solve.is_none() && score >= spec.target_score {
                record.steps_to_solve = Some(step);
            }
            record.eval_points.push(point);
            if let Some(e) = expert.as_ref() {
                e.notify(ConsoleMessage::Curve { step, score });
            }
            observer.on_eval(&point, agent.online());
        }
    }

    record.charged = controller.charged();
    record.demo_transitions = demo_transitions;
    let fingerprint_after = expert.as_ref().and_then(|e| e.network()).map(QNetwork::fingerprint);
    record.expert_untouched = fingerprint_before == fingerprint_after;
    Ok(record)
}

/// Fills in N-step returns for a list of consecutive transitions.
fn attach_n_step(transitions: Vec<Transition>, n: usize, gamma: f64) -> Vec<Transition> {
    let mut acc = NStepAccumulator::new(n, gamma);
    let len = transitions.len();
    // An episode also ends where the next stored state does not continue it.
    let boundaries: Vec<bool> = (0..len)
        .map(|i| transitions[i].terminal || i + 1 == len || transitions[i + 1].state != transitions[i].next_state)
        .collect();
    let mut out = Vec::with_capacity(len);
    for (t, boundary) in transitions.into_iter().zip(boundaries) {
        out.extend(acc.push(t, boundary));
    }
    out
}
