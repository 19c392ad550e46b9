//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use arld_core::nn::{Gradients, NetworkSpec, NoisyLayer, Output, QNetwork, Tensor};
use arld_core::replay::Transition;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.shape()[1];
    w.values()
        .chunks(cols)
        .zip(b.values())
        .map(|(row, bias)| {
            let mut s = *bias;
            for j in 0..cols {
                s += row[j] * x[j];
            }
            s
        })
        .collect()
}

/// Trunk pre-activations for every hidden layer.
pub fn preactivations(net: &QNetwork, state: &[f64]) -> Vec<Vec<f64>> {
    let mut x = state.to_vec();
    let mut out = Vec::new();
    for layer in net.trunk() {
        let z = affine(&layer.weights, &layer.bias, &x);
        x = z.iter().map(|v| v.max(0.0)).collect();
        out.push(z);
    }
    out
}

/// Smallest `|z|` over all hidden pre-activations; small values sit near a ReLU kink.
pub fn kink_distance(net: &QNetwork, state: &[f64]) -> f64 {
    preactivations(net, state)
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

pub fn features(net: &QNetwork, state: &[f64]) -> Vec<f64> {
    match preactivations(net, state).pop() {
        Some(z) => z.iter().map(|v| v.max(0.0)).collect(),
        None => state.to_vec(),
    }
}

/// Q-values of head `k` computed without the library's forward pass.
pub fn head_q(net: &QNetwork, k: usize, state: &[f64]) -> Vec<f64> {
    let f = features(net, state);
    match net.output() {
        Output::Heads(h) => affine(&h[k].weights, &h[k].bias, &f),
        Output::Noisy(l) => affine(&l.mu_w, &l.mu_b, &f),
    }
}

/// Mean-map Q-values of a noisy layer (noise ignored).
pub fn noisy_mean_q(layer: &NoisyLayer, f: &[f64]) -> Vec<f64> {
    affine(&layer.mu_w, &layer.mu_b, f)
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Central finite differences of `loss` over every parameter of `net`,
/// returning the largest relative error against `analytic` (optionally
/// rescaled per tensor).
pub fn fd_worst(
    net: &QNetwork,
    analytic: &Gradients,
    scale: impl Fn(usize) -> f64,
    step: f64,
    loss: impl Fn(&QNetwork) -> f64,
) -> f64 {
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let shapes: Vec<usize> = net.params().iter().map(|t| t.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for j in 0..len {
            let orig = probe.params()[ti].values()[j];
            probe.params_mut()[ti].values_mut()[j] = orig + step;
            let up = loss(&probe);
            probe.params_mut()[ti].values_mut()[j] = orig - step;
            let down = loss(&probe);
            probe.params_mut()[ti].values_mut()[j] = orig;
            let fd = (up - down) / (2.0 * step);
            let a = analytic.tensors()[ti].values()[j] * scale(ti);
            worst = worst.max(rel_err(a, fd));
        }
    }
    worst
}

/// Result of the straight-line double-DQN reference.
pub struct DqnOracle {
    pub loss: f64,
    pub abs_td: Vec<f64>,
    /// Gradients in parameter order: trunk `(w, b)` pairs, then the head.
    pub grads: Vec<Vec<f64>>,
}

/// Prioritized double-DQN loss `(1/B) sum_i w_i (y_i - Q(s_i, a_i))^2` and its
/// gradient for a single-head dense network, by explicit backpropagation.
pub fn double_dqn_oracle(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[Transition],
    weights: &[f64],
    gamma: f64,
) -> DqnOracle {
    let trunk = online.trunk();
    let head = match online.output() {
        Output::Heads(h) => {
            assert_eq!(h.len(), 1, "oracle covers one head");
            &h[0]
        }
        Output::Noisy(_) => panic!("oracle covers dense heads"),
    };
    let mut grads: Vec<Vec<f64>> = online.params().iter().map(|t| vec![0.0; t.len()]).collect();
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut abs_td = Vec::new();
    for (t, &w) in batch.iter().zip(weights) {
        // Forward with stored activations.
        let mut acts = vec![t.state.clone()];
        let mut pre = Vec::new();
        for l in trunk {
            let z = affine(&l.weights, &l.bias, acts.last().unwrap());
            acts.push(z.iter().map(|v| v.max(0.0)).collect());
            pre.push(z);
        }
        let f = acts.last().unwrap().clone();
        let q = affine(&head.weights, &head.bias, &f);
        let y = if t.terminal {
            t.reward
        } else {
            let a_star = argmax_first(&head_q(online, 0, &t.next_state));
            t.reward + gamma * head_q(target, 0, &t.next_state)[a_star]
        };
        let delta = y - q[t.action];
        loss += inv_b * w * delta * delta;
        abs_td.push(delta.abs());

        // dL/dq[a] = -2 w delta / B.
        let mut dq = vec![0.0; q.len()];
        dq[t.action] = -2.0 * w * delta * inv_b;
        let n_trunk = trunk.len();
        let hw = 2 * n_trunk;
        let cols = f.len();
        let mut upstream = vec![0.0; cols];
        for (i, g) in dq.iter().enumerate() {
            for j in 0..cols {
                grads[hw][i * cols + j] += g * f[j];
                upstream[j] += g * head.weights.values()[i * cols + j];
            }
            grads[hw + 1][i] += g;
        }
        for li in (0..n_trunk).rev() {
            let dz: Vec<f64> = upstream
                .iter()
                .zip(&pre[li])
                .map(|(u, z)| if *z > 0.0 { *u } else { 0.0 })
                .collect();
            let x = &acts[li];
            let cols = x.len();
            let mut next = vec![0.0; cols];
            let wv = trunk[li].weights.values();
            for (i, g) in dz.iter().enumerate() {
                for j in 0..cols {
                    grads[2 * li][i * cols + j] += g * x[j];
                    next[j] += g * wv[i * cols + j];
                }
                grads[2 * li + 1][i] += g;
            }
            upstream = next;
        }
    }
    DqnOracle { loss, abs_td, grads }
}

/// One bias-corrected Adam step on flat parameter vectors.
pub fn adam_oracle(params: &mut [Vec<f64>], grads: &[Vec<f64>], lr: f64) {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    for (p, g) in params.iter_mut().zip(grads) {
        for (x, &gi) in p.iter_mut().zip(g) {
            let m = (1.0 - b1) * gi;
            let v = (1.0 - b2) * gi * gi;
            let m_hat = m / (1.0 - b1);
            let v_hat = v / (1.0 - b2);
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Sort-based reference for the adaptive query rule: query when the window
/// is empty or `u` exceeds the descending rank `min(floor(n t), n - 1)`.
pub fn naive_query_decisions(stream: &[f64], t_query: f64, capacity: usize) -> Vec<bool> {
    let mut window: Vec<f64> = Vec::new();
    let mut out = Vec::with_capacity(stream.len());
    for &u in stream {
        let ask = if window.is_empty() {
            true
        } else {
            let mut sorted = window.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let n = sorted.len();
            let idx = ((n as f64 * t_query).floor() as usize).min(n - 1);
            u > sorted[idx]
        };
        out.push(ask);
        window.push(u);
        if window.len() > capacity {
            window.remove(0);
        }
    }
    out
}

/// Deterministic finite MDP for value-iteration checks.
pub struct TabularMdp {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn q_star(&self) -> Vec<Vec<f64>> {
        let ns = self.next.len();
        let na = self.next[0].len();
        let mut q = vec![vec![0.0; na]; ns];
        for _ in 0..10_000 {
            let v: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            for s in 0..ns {
                for a in 0..na {
                    q[s][a] = self.reward[s][a] + self.gamma * v[self.next[s][a]];
                }
            }
        }
        q
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.next.len()];
        v[s] = 1.0;
        v
    }
}

/// Empirical variance of `Q(a)` under independent standard-normal weight noise.
pub fn mc_variance<R: Rng>(layer: &NoisyLayer, f: &[f64], action: usize, samples: usize, rng: &mut R) -> f64 {
    let p = f.len();
    let mu = &layer.mu_w.values()[action * p..(action + 1) * p];
    let sigma = &layer.sigma_w.values()[action * p..(action + 1) * p];
    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 1..=samples {
        let mut q = layer.mu_b.values()[action] + layer.sigma_b.values()[action] * rng.sample::<f64, _>(StandardNormal);
        for j in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            q += (mu[j] + sigma[j] * e) * f[j];
        }
        let d = q - mean;
        mean += d / n as f64;
        m2 += d * (q - mean);
    }
    m2 / (samples - 1) as f64
}

/// Random small network of the given variant.
pub fn random_spec<R: Rng>(rng: &mut R, noisy: bool, heads: usize) -> NetworkSpec {
    let inputs = rng.random_range(1..=4);
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
    let actions = rng.random_range(2..=3);
    if noisy {
        NetworkSpec::noisy(inputs, &hidden, actions)
    } else {
        NetworkSpec::bootstrapped(inputs, &hidden, actions, heads)
    }
}

/// A state whose pre-activations all stay at least `margin` away from zero.
pub fn state_off_kinks<R: Rng>(net: &QNetwork, rng: &mut R, margin: f64) -> Vec<f64> {
    let n = net.spec().inputs;
    loop {
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        if kink_distance(net, &s) > margin {
            return s;
        }
    }
}
