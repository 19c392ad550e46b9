//! Experiment orchestration: presets, trials, multi-seed runs, aggregation,
//! run logs and the console bridge.
//!
//! Trials are independent, so [`run_trials`] spreads seeds over a rayon pool
//! when the `parallel` feature is enabled. A single trial always runs on one
//! thread.

mod aggregate;
pub mod bridge;
mod config;
mod trial;

use std::io::Write;

use serde::Serialize;

pub use aggregate::{aggregate, median, summary_table, CurvePoint, Summary};
pub use config::{parse_variant, variant_suffix, ExperimentConfig, Method, SCHEMA_VERSION};
pub use trial::{evaluate_greedy, run_trial, run_trial_with, EvalPoint, NoObserver, QueryEvent, RunRecord, StepLog, TrialObserver};

use crate::envs::Task;
use crate::error::{Error, Result};
use crate::expert::{select_weak_checkpoint, Checkpoint, ExpertPolicy, ExpertSelectionRule, ExpertStats};
use crate::nn::{OutputKind, QNetwork};

/// Runs every seed of `config` and returns the records in seed order.
pub fn run_trials(config: &ExperimentConfig, expert: Option<&ExpertPolicy>) -> Result<Vec<RunRecord>> {
    Ok(run_trials_observed(config, expert, |_| Ok(NoObserver))?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

/// Runs every seed with its own observer from `make`, in parallel when the
/// `parallel` feature is enabled. A human expert forces sequential seeds.
pub fn run_trials_observed<O, F>(
    config: &ExperimentConfig,
    expert: Option<&ExpertPolicy>,
    make: F,
) -> Result<Vec<(RunRecord, O)>>
where
    O: TrialObserver + Send,
    F: Fn(u64) -> Result<O> + Sync,
{
    let one = |seed: u64| -> Result<(RunRecord, O)> {
        let mut obs = make(seed)?;
        let record = run_trial(config, seed, expert, &mut obs)?;
        Ok((record, obs))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if !expert.is_some_and(ExpertPolicy::is_human) {
            return config.seeds.par_iter().map(|&s| one(s)).collect();
        }
    }
    config.seeds.iter().map(|&s| one(s)).collect()
}

/// Runs the seeds one after another on the calling thread.
pub fn run_trials_sequential(config: &ExperimentConfig, expert: Option<&ExpertPolicy>) -> Result<Vec<RunRecord>> {
    config
        .seeds
        .iter()
        .map(|&seed| run_trial(config, seed, expert, &mut NoObserver))
        .collect()
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine<'a> {
    Step(&'a StepLog),
    Eval(&'a EvalPoint),
}

/// Writes one JSON object per line: `{"kind":"step",...}` or `{"kind":"eval",...}`.
pub struct JsonlLog<W: Write> {
    out: W,
    /// Write every n-th step record; evaluations are always written.
    pub step_stride: u64,
    error: Option<std::io::Error>,
}

impl<W: Write> JsonlLog<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            step_stride: 1,
            error: None,
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.step_stride = stride.max(1);
        self
    }

    fn write(&mut self, line: &LogLine<'_>) {
        if self.error.is_some() {
            return;
        }
        let text = serde_json::to_string(line).expect("log lines always serialize");
        if let Err(e) = writeln!(self.out, "{text}") {
            self.error = Some(e);
        }
    }

    /// Flushes and returns the writer, or the first write error.
    pub fn finish(mut self) -> Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TrialObserver for JsonlLog<W> {
    fn on_step(&mut self, log: &StepLog) {
        if log.step % self.step_stride == 0 || log.new_query {
            self.write(&LogLine::Step(log));
        }
    }

    fn on_eval(&mut self, point: &EvalPoint, _net: &QNetwork) {
        self.write(&LogLine::Eval(point));
    }
}

/// Keeps a copy of the online network at every evaluation.
#[derive(Default)]
pub struct CheckpointCollector {
    pub checkpoints: Vec<Checkpoint>,
    pub scores: Vec<EvalPoint>,
}

impl TrialObserver for CheckpointCollector {
    fn on_eval(&mut self, point: &EvalPoint, net: &QNetwork) {
        self.checkpoints.push(Checkpoint {
            step: point.step,
            net: net.clone(),
        });
        self.scores.push(*point);
    }
}

/// Forwards every event to each inner observer.
pub struct Fanout<'a>(pub Vec<&'a mut dyn TrialObserver>);

impl TrialObserver for Fanout<'_> {
    fn on_step(&mut self, log: &StepLog) {
        for o in &mut self.0 {
            o.on_step(log);
        }
    }

    fn on_eval(&mut self, point: &EvalPoint, net: &QNetwork) {
        for o in &mut self.0 {
            o.on_eval(point, net);
        }
    }
}

/// Training configuration used to produce expert candidates.
pub fn expert_training_config(task: Task, variant: OutputKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(task, Method::Dqn, variant);
    cfg.seeds = vec![0];
    cfg
}

/// Trains `config` with `seed` and returns a checkpoint per evaluation.
pub fn train_checkpoints(config: &ExperimentConfig, seed: u64) -> Result<Vec<Checkpoint>> {
    let mut collector = CheckpointCollector::default();
    run_trial(config, seed, None, &mut collector)?;
    Ok(collector.checkpoints)
}

/// Trains one DQN run per seed until some run yields a checkpoint accepted
/// by `rule`. Returns the checkpoint, its statistics and the training seed.
pub fn make_weak_expert(
    config: &ExperimentConfig,
    seeds: &[u64],
    rule: &ExpertSelectionRule,
    eval_seed: u64,
) -> Result<(Checkpoint, ExpertStats, u64)> {
    let mut report = String::new();
    for &seed in seeds {
        let checkpoints = train_checkpoints(config, seed)?;
        match select_weak_checkpoint(&checkpoints, config.task, rule, eval_seed) {
            Ok((c, s)) => return Ok((c, s, seed)),
            Err(Error::NoQualifyingCheckpoint(msg)) => {
                report.push_str(&format!("training seed {seed}: {msg}\n"));
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoQualifyingCheckpoint(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputKind;

    fn tiny(method: Method) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(Task::CartPole, method, OutputKind::Bootstrapped { heads: 2 });
        c.training_steps = 300;
        c.eval_period = 100;
        c.eval_episodes = 2;
        c.pretrain_steps = 20;
        c.demonstrations = 40;
        c.agent.hidden = vec![8];
        c.agent.batch_size = 8;
        c.warmup = 8;
        c.seeds = vec![1, 2, 3];
        c
    }

    #[test]
    fn sequential_and_default_agree() {
        let c = tiny(Method::Dqn);
        let a = run_trials_sequential(&c, None).unwrap();
        let b = run_trials(&c, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(a[0].eval_points.len(), 3);
    }

    #[test]
    fn demo_methods_need_an_expert() {
        assert!(run_trial(&tiny(Method::Adqn), 0, None, &mut NoObserver).is_err());
    }

    #[test]
    fn jsonl_lines_parse() {
        let c = tiny(Method::Gdqn);
        let mut log = JsonlLog::new(Vec::new()).with_stride(50);
        let expert = ExpertPolicy::scripted(vec![0, 1]);
        let rec = run_trial(&c, 0, Some(&expert), &mut log).unwrap();
        let text = String::from_utf8(log.finish().unwrap()).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let evals = lines.iter().filter(|v| v["kind"] == "eval").count();
        assert_eq!(evals, rec.eval_points.len());
        assert!(lines.iter().any(|v| v["kind"] == "step" && v["is_demo"] == true));
        assert_eq!(rec.charged, 40);
        assert_eq!(rec.demo_transitions, 40);
    }

    #[test]
    fn collector_keeps_a_network_per_eval() {
        let c = tiny(Method::Dqn);
        let cps = train_checkpoints(&c, 0).unwrap();
        assert_eq!(cps.iter().map(|c| c.step).collect::<Vec<_>>(), vec![100, 200, 300]);
    }
}
