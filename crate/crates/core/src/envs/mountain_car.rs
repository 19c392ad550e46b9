use rand::Rng;

use super::constants::mountain_car::*;
use super::{Dynamics, RenderState};

#[derive(Clone, Debug, Default)]
pub struct MountainCar {
    pub position: f64,
    pub velocity: f64,
}

impl Dynamics for MountainCar {
    fn reset(&mut self, rng: &mut crate::rng::Rng) -> Vec<f64> {
        self.position = rng.random_range(INIT_LOW..INIT_HIGH);
        self.velocity = 0.0;
        self.observe()
    }

    fn step(&mut self, action: usize) -> (f64, bool) {
        let mut velocity =
            self.velocity + (action as f64 - 1.0) * FORCE + (3.0 * self.position).cos() * -GRAVITY;
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        let position = (self.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        self.position = position;
        self.velocity = velocity;
        let terminal = position >= GOAL_POSITION && velocity >= GOAL_VELOCITY;
        (-1.0, terminal)
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }

    fn render_state(&self) -> RenderState {
        RenderState::MountainCar {
            position: self.position,
            velocity: self.velocity,
        }
    }
}
