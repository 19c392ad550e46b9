use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, LinearSchedule};
use crate::envs::Task;
use crate::error::{Error, Result};
use crate::nn::OutputKind;
use crate::query::QueryConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// The six compared training methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Prioritized double DQN without demonstrations.
    Dqn,
    /// Offline demonstrations with pretraining, no queries.
    Dqfd,
    /// Queries at every step until the budget is spent.
    Gdqn,
    /// Queries with a fixed probability.
    Bdqn,
    /// Queries by the uncertainty rule.
    Adqn,
    /// Half the demonstrations offline with pretraining, half by the uncertainty rule.
    Adqnp,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Dqn, Method::Dqfd, Method::Gdqn, Method::Bdqn, Method::Adqn, Method::Adqnp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dqn => "DQN",
            Method::Dqfd => "DQfD",
            Method::Gdqn => "GDQN",
            Method::Bdqn => "BDQN",
            Method::Adqn => "ADQN",
            Method::Adqnp => "ADQNP",
        }
    }

    pub fn uses_demonstrations(self) -> bool {
        self != Method::Dqn
    }

    pub fn pretrains(self) -> bool {
        matches!(self, Method::Dqfd | Method::Adqnp)
    }

    pub fn queries(self) -> bool {
        matches!(self, Method::Gdqn | Method::Bdqn | Method::Adqn | Method::Adqnp)
    }

    /// `(offline demonstrations, online query budget)` out of `total`.
    pub fn demo_split(self, total: usize) -> (usize, usize) {
        match self {
            Method::Dqn => (0, 0),
            Method::Dqfd => (total, 0),
            Method::Gdqn | Method::Bdqn | Method::Adqn => (0, total),
            Method::Adqnp => (total / 2, total - total / 2),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Short suffix used in tables: `B` for bootstrapped, `N` for noisy.
pub fn variant_suffix(v: OutputKind) -> &'static str {
    match v {
        OutputKind::Bootstrapped { .. } => "B",
        OutputKind::Noisy => "N",
    }
}

pub fn parse_variant(s: &str, heads: usize) -> Result<OutputKind> {
    match s.to_ascii_lowercase().as_str() {
        "bootstrapped" | "b" => Ok(OutputKind::Bootstrapped { heads }),
        "noisy" | "n" => Ok(OutputKind::Noisy),
        other => Err(Error::Config(format!("unknown variant {other:?}"))),
    }
}

/// Everything needed to run one method on one task for a list of seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: Task,
    pub method: Method,
    /// Demonstrated transitions available in total, split by the method.
    pub demonstrations: usize,
    pub pretrain_steps: u64,
    pub training_steps: u64,
    pub memory_size: usize,
    pub eval_period: u64,
    pub eval_episodes: usize,
    /// Transitions stored before updates begin.
    pub warmup: usize,
    pub seeds: Vec<u64>,
    pub agent: AgentConfig,
    pub query: QueryConfig,
}

impl ExperimentConfig {
    /// Task-specific defaults for `method` with the given output variant.
    pub fn preset(task: Task, method: Method, variant: OutputKind) -> Self {
        let noisy = variant == OutputKind::Noisy;
        let (gamma, lr, steps, demos, memory, lambda, t_b, t_n) = match task {
            Task::CartPole => (0.9, 1e-4, 20_000, 200, 10_000, 1e-5, 0.05, 0.5),
            Task::Acrobot => (0.99, 1e-4, 200_000, 100, 100_000, 1.0, 0.3, 0.3),
            Task::MountainCar => (0.99, 1e-3, 500_000, 500, 100_000, 1.0, 0.1, 0.3),
        };
        let short = task == Task::CartPole;
        let agent = AgentConfig {
            gamma,
            learning_rate: lr,
            batch_size: 32,
            target_update_period: if short { 100 } else { 1000 },
            lambda_margin: lambda,
            epsilon: LinearSchedule {
                start: 0.9,
                end: 0.01,
                steps: if short { 2_000 } else { steps / 10 },
            },
            beta: LinearSchedule {
                start: 0.4,
                end: 1.0,
                steps,
            },
            variant,
            ..AgentConfig::default()
        };
        Self {
            schema_version: SCHEMA_VERSION,
            task,
            method,
            demonstrations: demos,
            pretrain_steps: 10_000,
            training_steps: steps,
            memory_size: memory,
            eval_period: if short { 500 } else { 5_000 },
            eval_episodes: 20,
            warmup: agent.batch_size,
            seeds: (0..20).collect(),
            query: QueryConfig {
                t_query: if noisy { t_n } else { t_b },
                ..QueryConfig::default()
            },
            agent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.agent.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.eval_period == 0 || self.eval_episodes == 0 {
            return bad("eval period and episode count must be positive");
        }
        if self.memory_size < self.warmup.max(self.agent.batch_size) {
            return bad("memory must hold at least the warm-up and one batch");
        }
        let (offline, _) = self.method.demo_split(self.demonstrations);
        if offline >= self.memory_size {
            return bad("offline demonstrations must leave room for agent transitions");
        }
        if !(0.0..=1.0).contains(&self.query.t_query) || self.query.window == 0 || self.query.session_len == 0 {
            return bad("t_query must lie in [0, 1]; window and session length must be positive");
        }
        Ok(())
    }

    /// Label such as `ADQN-B`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.method, variant_suffix(self.agent.variant))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}
