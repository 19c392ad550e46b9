//! Cart-Pole, Acrobot and Mountain Car with the public classic-control dynamics.
//!
//! [`Env`] adds the time limit on top of each task's [`Dynamics`]: the
//! `terminal` flag of a [`StepResult`] is set only by the task itself, while
//! hitting the step limit sets `truncated`.

mod acrobot;
mod cartpole;
pub mod constants;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use mountain_car::MountainCar;

use crate::error::{contract, Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    CartPole,
    Acrobot,
    MountainCar,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::CartPole, Task::Acrobot, Task::MountainCar];

    pub fn spec(self) -> EnvSpec {
        match self {
            Task::CartPole => EnvSpec {
                obs_dim: 4,
                num_actions: 2,
                max_episode_steps: constants::cartpole::MAX_EPISODE_STEPS,
                target_score: constants::cartpole::TARGET_SCORE,
            },
            Task::Acrobot => EnvSpec {
                obs_dim: 6,
                num_actions: 3,
                max_episode_steps: constants::acrobot::MAX_EPISODE_STEPS,
                target_score: constants::acrobot::TARGET_SCORE,
            },
            Task::MountainCar => EnvSpec {
                obs_dim: 2,
                num_actions: 3,
                max_episode_steps: constants::mountain_car::MAX_EPISODE_STEPS,
                target_score: constants::mountain_car::TARGET_SCORE,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::CartPole => "cartpole",
            Task::Acrobot => "acrobot",
            Task::MountainCar => "mountaincar",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Task::CartPole => "Cart-Pole",
            Task::Acrobot => "Acrobot",
            Task::MountainCar => "Mountain Car",
        }
    }

    pub fn make(self) -> Env {
        Env::new(self)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "cartpole" => Ok(Task::CartPole),
            "acrobot" => Ok(Task::Acrobot),
            "mountaincar" => Ok(Task::MountainCar),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub max_episode_steps: usize,
    pub target_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The task itself ended the episode (failure or goal).
    pub terminal: bool,
    /// The time limit ended the episode.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Named physical quantities used by the expert console to draw a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RenderState {
    CartPole {
        x: f64,
        x_dot: f64,
        theta: f64,
        theta_dot: f64,
    },
    Acrobot {
        theta1: f64,
        theta2: f64,
        dtheta1: f64,
        dtheta2: f64,
    },
    MountainCar {
        position: f64,
        velocity: f64,
    },
}

/// Raw per-step dynamics of one task, without the time limit.
pub trait Dynamics: Send {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    /// Advances one step; returns `(reward, terminal)`.
    fn step(&mut self, action: usize) -> (f64, bool);
    fn observe(&self) -> Vec<f64>;
    fn render_state(&self) -> RenderState;
}

/// A task instance with its own initial-state generator and time limit.
pub struct Env {
    task: Task,
    spec: EnvSpec,
    dynamics: Box<dyn Dynamics>,
    rng: Rng,
    steps: usize,
    finished: bool,
    started: bool,
}

impl Env {
    pub fn new(task: Task) -> Self {
        let dynamics: Box<dyn Dynamics> = match task {
            Task::CartPole => Box::new(CartPole::default()),
            Task::Acrobot => Box::new(Acrobot::default()),
            Task::MountainCar => Box::new(MountainCar::default()),
        };
        Self {
            task,
            spec: task.spec(),
            dynamics,
            rng: seeded(0),
            steps: 0,
            finished: false,
            started: false,
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Reseeds the initial-state generator and starts an episode.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = seeded(seed);
        self.reset_next()
    }

    /// Starts the next episode from the current generator state.
    pub fn reset_next(&mut self) -> Vec<f64> {
        self.steps = 0;
        self.finished = false;
        self.started = true;
        self.dynamics.reset(&mut self.rng)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if !self.started {
            return Err(contract("step called before reset"));
        }
        if self.finished {
            return Err(contract("step called after the episode finished"));
        }
        if action >= self.spec.num_actions {
            return Err(contract(format!(
                "action {action} out of range for {} ({} actions)",
                self.task, self.spec.num_actions
            )));
        }
        let (reward, terminal) = self.dynamics.step(action);
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.spec.max_episode_steps;
        self.finished = terminal || truncated;
        Ok(StepResult {
            next_state: self.dynamics.observe(),
            reward,
            terminal,
            truncated,
        })
    }

    pub fn observe(&self) -> Vec<f64> {
        self.dynamics.observe()
    }

    pub fn render_state(&self) -> RenderState {
        self.dynamics.render_state()
    }

    /// Replaces the dynamics state directly (tests and fixtures).
    pub fn set_dynamics(&mut self, dynamics: Box<dyn Dynamics>) {
        self.dynamics = dynamics;
        self.steps = 0;
        self.finished = false;
        self.started = true;
    }
}

/// Undiscounted sum of rewards.
pub fn episode_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// Runs one episode under `policy` and returns `(return, length, terminal)`.
pub fn run_episode<F>(env: &mut Env, mut policy: F) -> Result<(f64, usize, bool)>
where
    F: FnMut(&[f64]) -> Result<usize>,
{
    let mut state = env.reset_next();
    let mut total = 0.0;
    loop {
        let action = policy(&state)?;
        let step = env.step(action)?;
        total += step.reward;
        if step.done() {
            return Ok((total, env.steps(), step.terminal));
        }
        state = step.next_state;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_match_task_table() {
        let c = Task::CartPole.spec();
        assert_eq!((c.obs_dim, c.num_actions, c.max_episode_steps, c.target_score), (4, 2, 200, 195.0));
        let a = Task::Acrobot.spec();
        assert_eq!((a.obs_dim, a.num_actions, a.max_episode_steps, a.target_score), (6, 3, 500, -100.0));
        let m = Task::MountainCar.spec();
        assert_eq!((m.obs_dim, m.num_actions, m.max_episode_steps, m.target_score), (2, 3, 200, -110.0));
    }

    #[test]
    fn reset_is_deterministic() {
        for task in Task::ALL {
            let mut a = task.make();
            let mut b = task.make();
            assert_eq!(a.reset(17), b.reset(17));
        }
    }

    #[test]
    fn cartpole_initial_state_is_bounded_and_centered() {
        let mut env = Task::CartPole.make();
        let n = 10_000;
        let mut sums = [0.0; 4];
        for seed in 0..n {
            let s = env.reset(seed);
            for (i, v) in s.iter().enumerate() {
                assert!(v.abs() <= 0.05);
                sums[i] += v;
            }
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.005);
        }
    }

    #[test]
    fn mountain_car_hand_evaluated_step() {
        let mut env = Task::MountainCar.make();
        env.set_dynamics(Box::new(MountainCar {
            position: -0.5,
            velocity: 0.0,
        }));
        let r = env.step(1).unwrap();
        let v = -(3.0f64 * -0.5).cos() * 0.0025;
        assert!((r.next_state[1] - v).abs() < 1e-15);
        assert!((r.next_state[1] + 0.0001768).abs() < 1e-7);
        assert!((r.next_state[0] - (-0.5 + v)).abs() < 1e-15);
        assert_eq!(r.reward, -1.0);
        assert!(!r.terminal);
    }

    #[test]
    fn cartpole_first_step_from_rest_stays_up() {
        let mut env = Task::CartPole.make();
        env.set_dynamics(Box::new(CartPole { state: [0.0; 4] }));
        for action in 0..2 {
            env.set_dynamics(Box::new(CartPole { state: [0.0; 4] }));
            let r = env.step(action).unwrap();
            assert!(r.next_state[2].abs() < constants::cartpole::THETA_THRESHOLD);
            assert!(!r.terminal);
            assert_eq!(r.reward, 1.0);
        }
    }

    #[test]
    fn acrobot_zero_torque_truncates() {
        let mut env = Task::Acrobot.make();
        env.reset(3);
        let mut rewards = Vec::new();
        loop {
            let r = env.step(1).unwrap();
            rewards.push(r.reward);
            assert!(!r.terminal);
            if r.truncated {
                break;
            }
        }
        assert_eq!(rewards.len(), 500);
        assert_eq!(episode_return(&rewards), -500.0);
    }

    #[test]
    fn step_after_finish_is_rejected() {
        let mut env = Task::CartPole.make();
        env.reset(0);
        loop {
            if env.step(1).unwrap().done() {
                break;
            }
        }
        assert!(env.step(0).is_err());
        let mut fresh = Task::CartPole.make();
        assert!(fresh.step(0).is_err());
        fresh.reset(0);
        assert!(fresh.step(2).is_err());
    }

    #[test]
    fn episode_return_cases() {
        assert_eq!(episode_return(&[]), 0.0);
        assert_eq!(episode_return(&[1.0; 200]), 200.0);
        assert_eq!(episode_return(&[-1.0; 120]), -120.0);
    }

    #[test]
    fn cartpole_termination_matches_thresholds() {
        use rand::Rng as _;
        let mut rng = seeded(8);
        let mut env = Task::CartPole.make();
        for seed in 0..200 {
            env.reset(seed);
            loop {
                let r = env.step(rng.random_range(0..2)).unwrap();
                let (x, th) = (r.next_state[0], r.next_state[2]);
                let out = x.abs() > 2.4 || th.abs() > constants::cartpole::THETA_THRESHOLD;
                assert_eq!(r.terminal, out);
                if r.done() {
                    break;
                }
            }
        }
    }

    #[test]
    fn mountain_car_stays_in_bounds() {
        use rand::Rng as _;
        let mut rng = seeded(9);
        let mut env = Task::MountainCar.make();
        for seed in 0..50 {
            env.reset(seed);
            loop {
                let r = env.step(rng.random_range(0..3)).unwrap();
                assert!((-1.2..=0.6).contains(&r.next_state[0]));
                assert!((-0.07..=0.07).contains(&r.next_state[1]));
                if r.done() {
                    break;
                }
            }
        }
    }

    #[test]
    fn same_seed_and_actions_give_same_trajectory() {
        for task in Task::ALL {
            let run = || {
                let mut env = task.make();
                let mut states = vec![env.reset(5)];
                for t in 0..100 {
                    let r = env.step(t % task.spec().num_actions).unwrap();
                    states.push(r.next_state.clone());
                    if r.done() {
                        break;
                    }
                }
                states
            };
            assert_eq!(run(), run());
        }
    }
}
