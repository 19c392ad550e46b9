//! Prioritized double-DQN learner with the demonstration loss, in bootstrapped
//! and noisy flavours.

mod loss;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use loss::{composite_loss, margin_loss, n_step_target, td_target, LossNoise, LossOutput, LossWeights};

use crate::error::{Error, Result};
use crate::nn::{argmax, sample_noise, AdamConfig, AdamState, HeadSelect, NetworkSpec, NoiseSample, OutputKind, QNetwork};
use crate::replay::{PrioritizedBuffer, PriorityConfig, Transition};
use crate::rng::Rng;

/// Linear interpolation from `start` to `end` over `steps`, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            start: value,
            end: value,
            steps: 0,
        }
    }

    pub fn value(&self, t: u64) -> f64 {
        if self.steps == 0 || t >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * (t as f64 / self.steps as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Gradient updates between target-network copies.
    pub target_update_period: u64,
    /// Weight of the N-step loss.
    pub lambda_n_step: f64,
    /// Weight of the large-margin loss.
    pub lambda_margin: f64,
    /// Weight of the L2 penalty.
    pub lambda_l2: f64,
    pub margin: f64,
    pub n_step: usize,
    pub epsilon: LinearSchedule,
    /// Importance-sampling exponent over training.
    pub beta: LinearSchedule,
    pub variant: OutputKind,
    pub hidden: Vec<usize>,
    pub priority: PriorityConfig,
    /// Bernoulli probability of each bootstrap mask entry.
    pub mask_probability: f64,
    /// Apply epsilon-greedy on top of head or noise sampling.
    pub stack_epsilon: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-4,
            batch_size: 32,
            target_update_period: 1000,
            lambda_n_step: 0.0,
            lambda_margin: 1.0,
            lambda_l2: 0.0,
            margin: 0.8,
            n_step: 10,
            epsilon: LinearSchedule {
                start: 0.9,
                end: 0.01,
                steps: 10_000,
            },
            beta: LinearSchedule {
                start: 0.4,
                end: 1.0,
                steps: 100_000,
            },
            variant: OutputKind::Bootstrapped { heads: 10 },
            hidden: vec![64, 64],
            priority: PriorityConfig::default(),
            mask_probability: 1.0,
            stack_epsilon: true,
        }
    }
}

impl AgentConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            n_step: self.lambda_n_step,
            margin: self.lambda_margin,
            l2: self.lambda_l2,
            expert_margin: self.margin,
        }
    }

    pub fn network_spec(&self, inputs: usize, num_actions: usize) -> NetworkSpec {
        NetworkSpec {
            inputs,
            hidden: self.hidden.clone(),
            num_actions,
            output: self.variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.target_update_period == 0 {
            return bad("learning rate, batch size and target period must be positive");
        }
        if self.margin < 0.0 || self.n_step == 0 {
            return bad("margin must be non-negative and n_step positive");
        }
        if !(self.mask_probability > 0.0 && self.mask_probability <= 1.0) {
            return bad("mask probability must lie in (0, 1]");
        }
        Ok(())
    }
}

/// How [`Agent::act`] picks an action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActMode {
    /// Exploratory behaviour with the given epsilon.
    Train { epsilon: f64 },
    /// Greedy on the head mean or the noise-free layer.
    Eval,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub loss: f64,
    pub td_loss: f64,
    pub n_step_loss: f64,
    pub margin_loss: f64,
    pub l2_loss: f64,
    pub mean_abs_td: f64,
    pub updates: u64,
}

/// Online and target networks with their optimizer and private randomness.
#[derive(Clone, Debug)]
pub struct Agent {
    config: AgentConfig,
    online: QNetwork,
    target: QNetwork,
    adam: AdamState,
    rng: Rng,
    episode_head: usize,
    acting_noise: Option<NoiseSample>,
    updates: u64,
}

impl Agent {
    pub fn new(config: AgentConfig, inputs: usize, num_actions: usize, mut rng: Rng) -> Result<Self> {
        config.validate()?;
        let online = QNetwork::init(&config.network_spec(inputs, num_actions), &mut rng)?;
        Self::from_network(config, online, rng)
    }

    /// Wraps an existing network; the target starts as a copy.
    pub fn from_network(config: AgentConfig, online: QNetwork, rng: Rng) -> Result<Self> {
        config.validate()?;
        let target = online.copy_to_target();
        let adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &online.params());
        let mut agent = Self {
            config,
            online,
            target,
            adam,
            rng,
            episode_head: 0,
            acting_noise: None,
            updates: 0,
        };
        agent.resample_noise();
        Ok(agent)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn episode_head(&self) -> usize {
        self.episode_head
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    fn resample_noise(&mut self) {
        self.acting_noise = self.online.noisy_layer().map(|l| sample_noise(&mut self.rng, l.inputs(), l.outputs()));
    }

    /// Picks the head that drives behaviour for the coming episode.
    pub fn begin_episode(&mut self) {
        let k = self.online.num_heads();
        self.episode_head = if k > 1 { self.rng.random_range(0..k) } else { 0 };
    }

    /// Q-values that drive exploratory behaviour at `state`.
    pub fn behaviour_q(&self, state: &[f64]) -> Result<Vec<f64>> {
        match &self.acting_noise {
            Some(noise) => self.online.q_values(state, HeadSelect::Noise(noise)),
            None => self.online.q_values(state, HeadSelect::Head(self.episode_head)),
        }
    }

    pub fn act(&mut self, state: &[f64], mode: ActMode) -> Result<usize> {
        match mode {
            ActMode::Eval => self.online.greedy_action(state),
            ActMode::Train { epsilon } => {
                if self.config.stack_epsilon && epsilon > 0.0 && self.rng.random_bool(epsilon.min(1.0)) {
                    return Ok(self.rng.random_range(0..self.online.num_actions()));
                }
                Ok(argmax(&self.behaviour_q(state)?))
            }
        }
    }

    fn loss_noise(&mut self) -> Option<LossNoise> {
        let layer = self.online.noisy_layer()?;
        let (p, q) = (layer.inputs(), layer.outputs());
        Some(LossNoise {
            online: sample_noise(&mut self.rng, p, q),
            online_next: sample_noise(&mut self.rng, p, q),
            target: sample_noise(&mut self.rng, p, q),
        })
    }

    /// One prioritized minibatch update.
    pub fn train_step(&mut self, buffer: &mut PrioritizedBuffer, beta: f64) -> Result<TrainDiagnostics> {
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let batch = buffer.sample(self.config.batch_size, beta, &mut self.rng)?;
        let entries: Vec<&Transition> = batch
            .ids
            .iter()
            .map(|&id| buffer.get(id))
            .collect::<Result<_>>()?;
        let noise = self.loss_noise();
        let out = composite_loss(
            &self.online,
            &self.target,
            &entries,
            &batch.weights,
            &self.config.loss_weights(),
            noise.as_ref(),
        )?;
        self.adam.step(&mut self.online.params_mut(), out.grads.tensors())?;
        buffer.update_priorities(&batch.ids, &out.td_errors)?;
        self.updates += 1;
        if self.updates % self.config.target_update_period == 0 {
            self.target.sync_from(&self.online);
        }
        self.resample_noise();
        let mean_abs_td = out.td_errors.iter().sum::<f64>() / out.td_errors.len() as f64;
        Ok(TrainDiagnostics {
            loss: out.loss,
            td_loss: out.td_loss,
            n_step_loss: out.n_step_loss,
            margin_loss: out.margin_loss,
            l2_loss: out.l2_loss,
            mean_abs_td,
            updates: self.updates,
        })
    }

    /// Updates on demonstration data alone, without touching an environment.
    pub fn pretrain(&mut self, buffer: &mut PrioritizedBuffer, steps: u64) -> Result<Vec<TrainDiagnostics>> {
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let beta = self.config.beta.start;
        (0..steps).map(|_| self.train_step(buffer, beta)).collect()
    }
}
