use std::f64::consts::PI;

use rand::Rng;

use super::constants::acrobot::*;
use super::{Dynamics, RenderState};

#[derive(Clone, Debug, Default)]
pub struct Acrobot {
    /// `[theta1, theta2, dtheta1, dtheta2]`
    pub state: [f64; 4],
}

/// Time derivative of `[theta1, theta2, dtheta1, dtheta2]` under `torque`.
fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let l1 = LINK_LENGTH_1;
    let (lc1, lc2) = (LINK_COM_POS_1, LINK_COM_POS_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let g = GRAVITY;
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin()
        - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

/// One classical fourth-order Runge-Kutta step over `[0, dt]`.
fn rk4(y0: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |y: [f64; 4], k: [f64; 4], h: f64| -> [f64; 4] {
        [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
    };
    let dt2 = dt / 2.0;
    let k1 = derivatives(y0, torque);
    let k2 = derivatives(add(y0, k1, dt2), torque);
    let k3 = derivatives(add(y0, k2, dt2), torque);
    let k4 = derivatives(add(y0, k3, dt), torque);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let diff = hi - lo;
    while x > hi {
        x -= diff;
    }
    while x < lo {
        x += diff;
    }
    x
}

impl Acrobot {
    pub fn tip_height(&self) -> f64 {
        let [t1, t2, _, _] = self.state;
        -t1.cos() - (t2 + t1).cos()
    }
}

impl Dynamics for Acrobot {
    fn reset(&mut self, rng: &mut crate::rng::Rng) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.random_range(-INIT_BOUND..INIT_BOUND);
        }
        self.observe()
    }

    fn step(&mut self, action: usize) -> (f64, bool) {
        let torque = AVAIL_TORQUE[action];
        let mut ns = rk4(self.state, torque, DT);
        ns[0] = wrap(ns[0], -PI, PI);
        ns[1] = wrap(ns[1], -PI, PI);
        ns[2] = ns[2].clamp(-MAX_VEL_1, MAX_VEL_1);
        ns[3] = ns[3].clamp(-MAX_VEL_2, MAX_VEL_2);
        self.state = ns;
        let terminal = self.tip_height() > 1.0;
        (if terminal { 0.0 } else { -1.0 }, terminal)
    }

    fn observe(&self) -> Vec<f64> {
        let [t1, t2, d1, d2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2]
    }

    fn render_state(&self) -> RenderState {
        let [theta1, theta2, dtheta1, dtheta2] = self.state;
        RenderState::Acrobot {
            theta1,
            theta2,
            dtheta1,
            dtheta2,
        }
    }
}
