use rand::Rng;

use super::constants::cartpole::*;
use super::{Dynamics, RenderState};

#[derive(Clone, Debug, Default)]
pub struct CartPole {
    /// `[x, x_dot, theta, theta_dot]`
    pub state: [f64; 4],
}

impl Dynamics for CartPole {
    fn reset(&mut self, rng: &mut crate::rng::Rng) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.random_range(-INIT_BOUND..INIT_BOUND);
        }
        self.observe()
    }

    fn step(&mut self, action: usize) -> (f64, bool) {
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        let x = x + TAU * x_dot;
        let x_dot = x_dot + TAU * x_acc;
        let theta = theta + TAU * theta_dot;
        let theta_dot = theta_dot + TAU * theta_acc;
        self.state = [x, x_dot, theta, theta_dot];
        let terminal = x.abs() > X_THRESHOLD || theta.abs() > THETA_THRESHOLD;
        (1.0, terminal)
    }

    fn observe(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn render_state(&self) -> RenderState {
        let [x, x_dot, theta, theta_dot] = self.state;
        RenderState::CartPole {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }
}
