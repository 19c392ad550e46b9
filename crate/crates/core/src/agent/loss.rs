//! Double-DQN targets and the composite demonstration loss.

use crate::error::{contract, Error, Result};
use crate::nn::{argmax, Gradients, HeadSelect, NoiseSample, QNetwork};
use crate::replay::Transition;

/// `r` for terminal transitions, otherwise
/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn td_target(
    online: &QNetwork,
    target: &QNetwork,
    t: &Transition,
    gamma: f64,
    online_select: HeadSelect<'_>,
    target_select: HeadSelect<'_>,
) -> Result<f64> {
    if t.terminal {
        return Ok(t.reward);
    }
    let a_star = argmax(&online.q_values(&t.next_state, online_select)?);
    let q_next = target.q_values(&t.next_state, target_select)?;
    Ok(t.reward + gamma * q_next[a_star])
}

/// `sum_{i<n} gamma^i r_i + gamma^n * bootstrap`, where `bootstrap` is
/// `max_a Q(s_{t+n}, a)` or `None` when the episode ended inside the window.
pub fn n_step_target(rewards: &[f64], gamma: f64, bootstrap: Option<f64>) -> f64 {
    let mut ret = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        ret += discount * r;
        discount *= gamma;
    }
    match bootstrap {
        Some(q) => ret + discount * q,
        None => ret,
    }
}

/// `max_a [Q(s, a) + M * 1(a != a_E)] - Q(s, a_E)`.
pub fn margin_loss(q_values: &[f64], expert_action: usize, margin: f64) -> f64 {
    margin_loss_with_argmax(q_values, expert_action, margin).0
}

/// The margin loss and the maximizing action (first one on ties).
fn margin_loss_with_argmax(q: &[f64], expert_action: usize, margin: f64) -> (f64, usize) {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (a, &v) in q.iter().enumerate() {
        let v = if a == expert_action { v } else { v + margin };
        if v > best_value {
            best = a;
            best_value = v;
        }
    }
    (best_value - q[expert_action], best)
}

/// Coefficients of the composite loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    /// Weight of the N-step TD loss.
    pub n_step: f64,
    /// Weight of the large-margin loss.
    pub margin: f64,
    /// Weight of the L2 penalty.
    pub l2: f64,
    /// Margin `M`.
    pub expert_margin: f64,
}

/// Independent noise draws for the noisy variant's loss.
#[derive(Clone, Debug)]
pub struct LossNoise {
    /// Online network at `s`.
    pub online: NoiseSample,
    /// Online network at `s'` (action selection).
    pub online_next: NoiseSample,
    /// Target network at `s'` (evaluation).
    pub target: NoiseSample,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub td_loss: f64,
    pub n_step_loss: f64,
    pub margin_loss: f64,
    pub l2_loss: f64,
    /// Mean `|delta|` over the privy heads of each entry, for priority updates.
    pub td_errors: Vec<f64>,
    pub grads: Gradients,
}

/// Composite loss over a weighted minibatch together with its gradient.
///
/// The loss is `1/B sum_i 1/|P_i| sum_{k in P_i} l_ik` where `P_i` are the
/// heads privy to entry `i` and
/// `l_ik = w_i delta_ik^2 + lambda1 w_i delta^N_ik^2 + lambda2 L_E,ik`,
/// plus `lambda3 ||theta||^2`. Importance weights do not touch the margin term.
///
/// Gradient normalization for `K` heads: each head receives the gradient of
/// its own loss (`K` times its share of the mean), and the trunk receives the
/// exact gradient of the mean loss. With one head this is the plain gradient.
pub fn composite_loss(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    weights: &[f64],
    lw: &LossWeights,
    noise: Option<&LossNoise>,
) -> Result<LossOutput> {
    if batch.len() != weights.len() {
        return Err(contract("batch and importance weights differ in length"));
    }
    if batch.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if online.is_noisy() != noise.is_some() {
        return Err(contract("noise draws must be supplied exactly for noisy networks"));
    }
    let k_heads = online.num_heads();
    let inv_b = 1.0 / batch.len() as f64;
    let num_actions = online.num_actions();
    let mut grads = Gradients::zeros_like(online);
    let mut out = LossOutput {
        loss: 0.0,
        td_loss: 0.0,
        n_step_loss: 0.0,
        margin_loss: 0.0,
        l2_loss: 0.0,
        td_errors: Vec::with_capacity(batch.len()),
        grads: Gradients::zeros_like(online),
    };

    let mut upstream: Vec<(usize, Vec<f64>)> = Vec::with_capacity(k_heads);
    for (t, &w) in batch.iter().zip(weights) {
        if t.action >= num_actions {
            return Err(contract(format!("stored action {} out of range", t.action)));
        }
        let privy: Vec<usize> = if online.is_noisy() {
            vec![0]
        } else {
            if t.mask.len() != k_heads {
                return Err(Error::ShapeMismatch {
                    context: "bootstrap mask",
                    expected: k_heads,
                    actual: t.mask.len(),
                });
            }
            (0..k_heads).filter(|&k| t.mask[k]).collect()
        };
        if privy.is_empty() {
            out.td_errors.push(0.0);
            continue;
        }
        let trace = online.forward_traced(&t.state)?;
        let needs_next = !t.terminal;
        let next_online = if needs_next {
            Some(online.features(&t.next_state)?)
        } else {
            None
        };
        let next_target = if needs_next {
            Some(target.features(&t.next_state)?)
        } else {
            None
        };
        let n_step = if lw.n_step != 0.0 { t.n_step.as_ref() } else { None };
        let n_step_features = match n_step {
            Some(info) if !info.terminal => Some(target.features(&info.state)?),
            _ => None,
        };

        // Per-entry scale of each head's upstream gradient.
        let head_scale = inv_b * k_heads as f64 / privy.len() as f64;
        let share = inv_b / privy.len() as f64;
        let mut abs_td = 0.0;
        upstream.clear();
        for &k in &privy {
            let (sel_online, sel_next, sel_target) = match noise {
                Some(n) => (
                    HeadSelect::Noise(&n.online),
                    HeadSelect::Noise(&n.online_next),
                    HeadSelect::Noise(&n.target),
                ),
                None => (HeadSelect::Head(k), HeadSelect::Head(k), HeadSelect::Head(k)),
            };
            let q = online.q_from_features(trace.features(), sel_online)?;
            let y = match (&next_online, &next_target) {
                (Some(fo), Some(ft)) => {
                    let a_star = argmax(&online.q_from_features(fo, sel_next)?);
                    t.reward + lw.gamma * target.q_from_features(ft, sel_target)?[a_star]
                }
                _ => t.reward,
            };
            let delta = y - q[t.action];
            abs_td += delta.abs();
            let mut dq = vec![0.0; num_actions];
            out.td_loss += share * w * delta * delta;
            dq[t.action] -= 2.0 * w * delta;

            if let Some(info) = n_step {
                let bootstrap = match &n_step_features {
                    Some(f) => {
                        let qn = target.q_from_features(f, sel_target)?;
                        Some(qn.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    }
                    None => None,
                };
                let y_n = info.discounted_return
                    + bootstrap.map_or(0.0, |b| lw.gamma.powi(info.len as i32) * b);
                let delta_n = y_n - q[t.action];
                out.n_step_loss += share * lw.n_step * w * delta_n * delta_n;
                dq[t.action] -= 2.0 * lw.n_step * w * delta_n;
            }

            if t.is_demo && lw.margin != 0.0 {
                let (le, a_max) = margin_loss_with_argmax(&q, t.action, lw.expert_margin);
                out.margin_loss += share * lw.margin * le;
                dq[a_max] += lw.margin;
                dq[t.action] -= lw.margin;
            }

            for g in &mut dq {
                *g *= head_scale;
            }
            upstream.push((k, dq));
        }
        out.td_errors.push(abs_td / privy.len() as f64);

        let selects: Vec<(HeadSelect<'_>, &[f64])> = upstream
            .iter()
            .map(|(k, dq)| {
                let sel = match noise {
                    Some(n) => HeadSelect::Noise(&n.online),
                    None => HeadSelect::Head(*k),
                };
                (sel, dq.as_slice())
            })
            .collect();
        online.backward(&trace, &selects, &mut grads)?;
    }
    grads.scale_trunk(1.0 / k_heads as f64);

    if lw.l2 != 0.0 {
        for (g, p) in grads.tensors_mut().iter_mut().zip(online.params()) {
            out.l2_loss += lw.l2 * p.squared_norm();
            g.add_scaled(p, 2.0 * lw.l2);
        }
    }
    out.loss = out.td_loss + out.n_step_loss + out.margin_loss + out.l2_loss;
    out.grads = grads;
    Ok(out)
}
