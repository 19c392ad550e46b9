use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::dot;
use super::{DenseLayer, NoiseSample, NoisyLayer, Tensor};
use crate::error::{contract, Error, Result};

/// Which kind of output layer sits on top of the trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputKind {
    Bootstrapped { heads: usize },
    Noisy,
}

/// Layer sizes of a [`QNetwork`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub num_actions: usize,
    pub output: OutputKind,
}

impl NetworkSpec {
    pub fn bootstrapped(inputs: usize, hidden: &[usize], num_actions: usize, heads: usize) -> Self {
        Self {
            inputs,
            hidden: hidden.to_vec(),
            num_actions,
            output: OutputKind::Bootstrapped { heads },
        }
    }

    pub fn noisy(inputs: usize, hidden: &[usize], num_actions: usize) -> Self {
        Self {
            inputs,
            hidden: hidden.to_vec(),
            num_actions,
            output: OutputKind::Noisy,
        }
    }

    /// Width `p` of the trunk output (the features fed to the output layer).
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.inputs)
    }

    pub fn num_heads(&self) -> usize {
        match self.output {
            OutputKind::Bootstrapped { heads } => heads,
            OutputKind::Noisy => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.num_actions == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config(format!("degenerate network spec {self:?}")));
        }
        if let OutputKind::Bootstrapped { heads: 0 } = self.output {
            return Err(Error::Config("bootstrapped network needs at least one head".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Heads(Vec<DenseLayer>),
    Noisy(NoisyLayer),
}

/// Selects the output used for one evaluation of the network.
#[derive(Clone, Copy, Debug)]
pub enum HeadSelect<'a> {
    /// One bootstrapped head.
    Head(usize),
    /// The noisy output layer under a fixed noise sample.
    Noise(&'a NoiseSample),
    /// Average over heads, or the noise-free mean map of the noisy layer.
    Mean,
}

/// ReLU MLP trunk plus a bootstrapped or noisy output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    spec: NetworkSpec,
    trunk: Vec<DenseLayer>,
    output: Output,
}

/// Intermediate activations of one forward pass, consumed by [`QNetwork::backward`].
#[derive(Clone, Debug, Default)]
pub struct Trace {
    input: Vec<f64>,
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn features(&self) -> &[f64] {
        self.activations.last().unwrap_or(&self.input)
    }

    pub fn is_recorded(&self) -> bool {
        !self.input.is_empty()
    }
}

/// One gradient tensor per parameter tensor, in [`QNetwork::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
    trunk_tensors: usize,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Self {
            tensors: net
                .params()
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
            trunk_tensors: 2 * net.trunk.len(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn trunk(&self) -> &[Tensor] {
        &self.tensors[..self.trunk_tensors]
    }

    pub fn output(&self) -> &[Tensor] {
        &self.tensors[self.trunk_tensors..]
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }

    pub fn scale_trunk(&mut self, factor: f64) {
        self.tensors[..self.trunk_tensors]
            .iter_mut()
            .for_each(|t| t.scale(factor));
    }

    pub fn scale_output(&mut self, factor: f64) {
        self.tensors[self.trunk_tensors..]
            .iter_mut()
            .for_each(|t| t.scale(factor));
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.values().iter().all(|&v| v == 0.0))
    }
}

impl QNetwork {
    /// Builds a network with fresh parameters drawn from `rng`.
    ///
    /// Trunk layers are drawn first, then each head in order, so heads are
    /// independent draws from the same stream.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut trunk = Vec::with_capacity(spec.hidden.len());
        let mut width = spec.inputs;
        for &h in &spec.hidden {
            trunk.push(DenseLayer::init(width, h, rng));
            width = h;
        }
        let output = match spec.output {
            OutputKind::Bootstrapped { heads } => Output::Heads(
                (0..heads)
                    .map(|_| DenseLayer::init(width, spec.num_actions, rng))
                    .collect(),
            ),
            OutputKind::Noisy => Output::Noisy(NoisyLayer::init(width, spec.num_actions, rng)),
        };
        Ok(Self {
            spec: spec.clone(),
            trunk,
            output,
        })
    }

    /// A network whose every parameter is zero.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut trunk = Vec::new();
        let mut width = spec.inputs;
        for &h in &spec.hidden {
            trunk.push(DenseLayer::zeros(width, h));
            width = h;
        }
        let output = match spec.output {
            OutputKind::Bootstrapped { heads } => Output::Heads(
                (0..heads)
                    .map(|_| DenseLayer::zeros(width, spec.num_actions))
                    .collect(),
            ),
            OutputKind::Noisy => Output::Noisy(NoisyLayer::zeros(width, spec.num_actions)),
        };
        Ok(Self {
            spec: spec.clone(),
            trunk,
            output,
        })
    }

    pub fn from_parts(spec: NetworkSpec, trunk: Vec<DenseLayer>, output: Output) -> Result<Self> {
        let net = Self {
            spec,
            trunk,
            output,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.trunk.len() != self.spec.hidden.len() {
            return Err(contract("trunk depth does not match spec"));
        }
        let mut width = self.spec.inputs;
        for (layer, &h) in self.trunk.iter().zip(&self.spec.hidden) {
            layer.validate(width, h)?;
            width = h;
        }
        match (&self.output, self.spec.output) {
            (Output::Heads(heads), OutputKind::Bootstrapped { heads: k }) if heads.len() == k => {
                for head in heads {
                    head.validate(width, self.spec.num_actions)?;
                }
                Ok(())
            }
            (Output::Noisy(layer), OutputKind::Noisy) => layer.validate(width, self.spec.num_actions),
            _ => Err(contract("output layer does not match spec")),
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.trunk
    }

    pub fn output(&self) -> &Output {
        &self.output
    }

    pub fn heads(&self) -> Option<&[DenseLayer]> {
        match &self.output {
            Output::Heads(h) => Some(h),
            Output::Noisy(_) => None,
        }
    }

    pub fn heads_mut(&mut self) -> Option<&mut [DenseLayer]> {
        match &mut self.output {
            Output::Heads(h) => Some(h),
            Output::Noisy(_) => None,
        }
    }

    pub fn noisy_layer(&self) -> Option<&NoisyLayer> {
        match &self.output {
            Output::Noisy(l) => Some(l),
            Output::Heads(_) => None,
        }
    }

    pub fn noisy_layer_mut(&mut self) -> Option<&mut NoisyLayer> {
        match &mut self.output {
            Output::Noisy(l) => Some(l),
            Output::Heads(_) => None,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.spec.num_actions
    }

    pub fn num_heads(&self) -> usize {
        self.spec.num_heads()
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim()
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self.output, Output::Noisy(_))
    }

    /// All trainable tensors: trunk `(w, b)` pairs, then either each head's
    /// `(w, b)` or the noisy layer's `(mu_w, sigma_w, mu_b, sigma_b)`.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.trunk {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        match &self.output {
            Output::Heads(heads) => {
                for h in heads {
                    out.push(&h.weights);
                    out.push(&h.bias);
                }
            }
            Output::Noisy(l) => out.extend([&l.mu_w, &l.sigma_w, &l.mu_b, &l.sigma_b]),
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.trunk {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        match &mut self.output {
            Output::Heads(heads) => {
                for h in heads {
                    out.push(&mut h.weights);
                    out.push(&mut h.bias);
                }
            }
            Output::Noisy(l) => {
                out.push(&mut l.mu_w);
                out.push(&mut l.sigma_w);
                out.push(&mut l.mu_b);
                out.push(&mut l.sigma_b);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Deep copy used as the target network.
    pub fn copy_to_target(&self) -> QNetwork {
        self.clone()
    }

    /// Overwrites this network's parameters with `other`'s, reusing storage.
    pub fn sync_from(&mut self, other: &QNetwork) {
        self.clone_from(other);
    }

    /// Stable hash of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for t in self.params() {
            t.shape().hash(&mut h);
            for v in t.values() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    fn check_input(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.spec.inputs {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: self.spec.inputs,
                actual: state.len(),
            });
        }
        Ok(())
    }

    /// Trunk output `phi(s)` (after the final ReLU).
    pub fn features(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_input(state)?;
        let mut x = state.to_vec();
        let mut y = Vec::new();
        for layer in &self.trunk {
            layer.forward_into(&x, &mut y);
            relu(&mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Runs the trunk and records every activation for a later backward pass.
    pub fn forward_traced(&self, state: &[f64]) -> Result<Trace> {
        self.check_input(state)?;
        let mut activations = Vec::with_capacity(self.trunk.len());
        let mut x: &[f64] = state;
        for layer in &self.trunk {
            let mut y = Vec::with_capacity(layer.outputs());
            layer.forward_into(x, &mut y);
            relu(&mut y);
            activations.push(y);
            x = activations.last().unwrap();
        }
        Ok(Trace {
            input: state.to_vec(),
            activations,
        })
    }

    /// Q-values of the selected output for precomputed trunk features.
    pub fn q_from_features(&self, features: &[f64], select: HeadSelect<'_>) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                context: "feature vector",
                expected: self.feature_dim(),
                actual: features.len(),
            });
        }
        let mut out = Vec::with_capacity(self.num_actions());
        match (&self.output, select) {
            (Output::Heads(heads), HeadSelect::Head(k)) => {
                let head = heads
                    .get(k)
                    .ok_or_else(|| contract(format!("head {k} out of range ({})", heads.len())))?;
                head.forward_into(features, &mut out);
            }
            (Output::Heads(heads), HeadSelect::Mean) => {
                out.resize(self.num_actions(), 0.0);
                let mut tmp = Vec::with_capacity(self.num_actions());
                for head in heads {
                    head.forward_into(features, &mut tmp);
                    for (o, v) in out.iter_mut().zip(&tmp) {
                        *o += v;
                    }
                }
                let k = heads.len() as f64;
                out.iter_mut().for_each(|v| *v /= k);
            }
            (Output::Noisy(layer), HeadSelect::Noise(noise)) => {
                if noise.inputs() != layer.inputs() || noise.outputs() != layer.outputs() {
                    return Err(contract("noise sample shape does not match the noisy layer"));
                }
                layer.forward_into(noise, features, &mut out);
            }
            (Output::Noisy(layer), HeadSelect::Mean) => {
                let p = layer.inputs();
                for (i, row) in layer.mu_w.values().chunks_exact(p).enumerate() {
                    out.push(dot(row, features) + layer.mu_b.values()[i]);
                }
            }
            (Output::Heads(_), HeadSelect::Noise(_)) => {
                return Err(contract("noise sample given to a bootstrapped network"))
            }
            (Output::Noisy(_), HeadSelect::Head(_)) => {
                return Err(contract("head index given to a noisy network"))
            }
        }
        Ok(out)
    }

    /// Q-values of every bootstrapped head (a single mean row for noisy nets).
    pub fn all_heads_from_features(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        match &self.output {
            Output::Heads(heads) => (0..heads.len())
                .map(|k| self.q_from_features(features, HeadSelect::Head(k)))
                .collect(),
            Output::Noisy(_) => Ok(vec![self.q_from_features(features, HeadSelect::Mean)?]),
        }
    }

    /// Returns `(q_values, features)` for one state.
    pub fn forward(&self, state: &[f64], select: HeadSelect<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let features = self.features(state)?;
        let q = self.q_from_features(&features, select)?;
        Ok((q, features))
    }

    pub fn q_values(&self, state: &[f64], select: HeadSelect<'_>) -> Result<Vec<f64>> {
        Ok(self.forward(state, select)?.0)
    }

    /// Greedy action of the mean output (head average, or noise-free).
    pub fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state, HeadSelect::Mean)?))
    }

    /// Accumulates into `grads` the gradient of `sum_i <dq_i, Q_i>`, where each
    /// `(select_i, dq_i)` pair is an upstream gradient at one output's Q-values.
    ///
    /// Heads not named in `upstream` receive exactly zero gradient.
    pub fn backward(
        &self,
        trace: &Trace,
        upstream: &[(HeadSelect<'_>, &[f64])],
        grads: &mut Gradients,
    ) -> Result<()> {
        if !trace.is_recorded() {
            return Err(contract("backward called without a recorded forward pass"));
        }
        if trace.input.len() != self.spec.inputs || trace.activations.len() != self.trunk.len() {
            return Err(contract("trace was recorded on a network of a different shape"));
        }
        if grads.tensors.len() != self.params().len() {
            return Err(contract("gradient buffer layout does not match the network"));
        }
        let features = trace.features();
        let p = features.len();
        let a = self.num_actions();
        let base = 2 * self.trunk.len();
        let mut dphi = vec![0.0; p];

        for (select, dq) in upstream {
            if dq.len() != a {
                return Err(Error::ShapeMismatch {
                    context: "upstream gradient",
                    expected: a,
                    actual: dq.len(),
                });
            }
            match (&self.output, *select) {
                (Output::Heads(heads), HeadSelect::Head(k)) => {
                    if k >= heads.len() {
                        return Err(contract(format!("head {k} out of range")));
                    }
                    dense_backward(&heads[k], features, dq, grads, base + 2 * k, &mut dphi);
                }
                (Output::Heads(heads), HeadSelect::Mean) => {
                    let share: Vec<f64> = dq.iter().map(|g| g / heads.len() as f64).collect();
                    for (k, head) in heads.iter().enumerate() {
                        dense_backward(head, features, &share, grads, base + 2 * k, &mut dphi);
                    }
                }
                (Output::Noisy(layer), HeadSelect::Noise(noise)) => {
                    noisy_backward(layer, noise, features, dq, grads, base, &mut dphi);
                }
                (Output::Noisy(layer), HeadSelect::Mean) => {
                    let zero = NoiseSample::zeros(layer.inputs(), layer.outputs());
                    noisy_backward(layer, &zero, features, dq, grads, base, &mut dphi);
                }
                _ => return Err(contract("head selection does not match the network variant")),
            }
        }

        let mut da = dphi;
        for l in (0..self.trunk.len()).rev() {
            let layer = &self.trunk[l];
            let out = &trace.activations[l];
            let input: &[f64] = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            // ReLU subgradient at exactly zero is zero.
            let dz: Vec<f64> = da
                .iter()
                .zip(out)
                .map(|(g, &y)| if y > 0.0 { *g } else { 0.0 })
                .collect();
            let cols = layer.inputs();
            {
                let gw = grads.tensors[2 * l].values_mut();
                for (row, &d) in gw.chunks_exact_mut(cols).zip(&dz) {
                    if d != 0.0 {
                        for (g, x) in row.iter_mut().zip(input) {
                            *g += d * x;
                        }
                    }
                }
            }
            for (g, d) in grads.tensors[2 * l + 1].values_mut().iter_mut().zip(&dz) {
                *g += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; cols];
                for (row, &d) in layer.weights.values().chunks_exact(cols).zip(&dz) {
                    if d != 0.0 {
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                da = prev;
            }
        }
        Ok(())
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn dense_backward(
    layer: &DenseLayer,
    x: &[f64],
    dy: &[f64],
    grads: &mut Gradients,
    index: usize,
    dx: &mut [f64],
) {
    let cols = layer.inputs();
    {
        let gw = grads.tensors[index].values_mut();
        for (row, &d) in gw.chunks_exact_mut(cols).zip(dy) {
            for (g, xv) in row.iter_mut().zip(x) {
                *g += d * xv;
            }
        }
    }
    for (g, d) in grads.tensors[index + 1].values_mut().iter_mut().zip(dy) {
        *g += d;
    }
    for (row, &d) in layer.weights.values().chunks_exact(cols).zip(dy) {
        for (o, w) in dx.iter_mut().zip(row) {
            *o += d * w;
        }
    }
}

fn noisy_backward(
    layer: &NoisyLayer,
    noise: &NoiseSample,
    x: &[f64],
    dy: &[f64],
    grads: &mut Gradients,
    index: usize,
    dx: &mut [f64],
) {
    let p = layer.inputs();
    let f_in = noise.f_in();
    let f_out = noise.f_out();
    for (i, &d) in dy.iter().enumerate() {
        let fo = f_out[i];
        let row = i * p..(i + 1) * p;
        {
            let g_mu = &mut grads.tensors[index].values_mut()[row.clone()];
            for (g, xv) in g_mu.iter_mut().zip(x) {
                *g += d * xv;
            }
        }
        {
            let g_sigma = &mut grads.tensors[index + 1].values_mut()[row.clone()];
            for ((g, xv), fi) in g_sigma.iter_mut().zip(x).zip(f_in) {
                *g += d * xv * fo * fi;
            }
        }
        grads.tensors[index + 2].values_mut()[i] += d;
        grads.tensors[index + 3].values_mut()[i] += d * fo;
        let mu_row = &layer.mu_w.values()[row.clone()];
        let sigma_row = &layer.sigma_w.values()[row];
        for j in 0..p {
            dx[j] += d * (mu_row[j] + sigma_row[j] * fo * f_in[j]);
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sample_noise;
    use crate::rng::seeded;

    /// Independent forward pass written against the raw parameter slices.
    fn oracle_forward(net: &QNetwork, state: &[f64], head: usize) -> Vec<f64> {
        let mut x = state.to_vec();
        for layer in net.trunk() {
            let (rows, cols) = (layer.outputs(), layer.inputs());
            let mut y = vec![0.0; rows];
            for i in 0..rows {
                let mut acc = layer.bias.values()[i];
                for j in 0..cols {
                    acc += layer.weights.values()[i * cols + j] * x[j];
                }
                y[i] = acc.max(0.0);
            }
            x = y;
        }
        let h = &net.heads().unwrap()[head];
        (0..h.outputs())
            .map(|i| {
                h.bias.values()[i]
                    + (0..h.inputs())
                        .map(|j| h.weights.values()[i * h.inputs() + j] * x[j])
                        .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&NetworkSpec::bootstrapped(4, &[8, 8], 3, 2)).unwrap();
        let (q, _) = net.forward(&[1.0, -2.0, 3.0, 0.5], HeadSelect::Head(1)).unwrap();
        assert_eq!(q, vec![0.0; 3]);
    }

    #[test]
    fn identity_network_passes_positive_state() {
        let spec = NetworkSpec::bootstrapped(3, &[3], 3, 1);
        let mut net = QNetwork::zeros(&spec).unwrap();
        for i in 0..3 {
            net.trunk_mut()[0].weights.values_mut()[i * 3 + i] = 1.0;
            net.heads_mut().unwrap()[0].weights.values_mut()[i * 3 + i] = 1.0;
        }
        let s = [0.5, 1.5, 2.5];
        let (q, phi) = net.forward(&s, HeadSelect::Head(0)).unwrap();
        assert_eq!(q, s.to_vec());
        assert_eq!(phi, s.to_vec());
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = seeded(11);
        let net = QNetwork::init(&NetworkSpec::bootstrapped(4, &[64, 64], 2, 3), &mut rng).unwrap();
        for _ in 0..50 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            for k in 0..3 {
                let q = net.q_values(&s, HeadSelect::Head(k)).unwrap();
                for (a, b) in q.iter().zip(oracle_forward(&net, &s, k)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = QNetwork::init(&NetworkSpec::noisy(4, &[8], 2), &mut seeded(0)).unwrap();
        assert!(net.forward(&[1.0, 2.0], HeadSelect::Mean).is_err());
        assert!(net.forward(&[1.0; 4], HeadSelect::Head(0)).is_err());
        let boot = QNetwork::init(&NetworkSpec::bootstrapped(4, &[8], 2, 2), &mut seeded(0)).unwrap();
        assert!(boot.forward(&[1.0; 4], HeadSelect::Head(2)).is_err());
    }

    #[test]
    fn init_is_deterministic_and_heads_differ() {
        let spec = NetworkSpec::bootstrapped(4, &[16, 16], 2, 2);
        let a = QNetwork::init(&spec, &mut seeded(7)).unwrap();
        let b = QNetwork::init(&spec, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
        let heads = a.heads().unwrap();
        assert_ne!(heads[0], heads[1]);
    }

    #[test]
    fn init_bounds_follow_fan_in() {
        let net = QNetwork::init(&NetworkSpec::bootstrapped(4, &[64], 2, 1), &mut seeded(1)).unwrap();
        let first = &net.trunk()[0];
        assert!(first.weights.values().iter().all(|w| w.abs() <= 0.5));
        let head = &net.heads().unwrap()[0];
        assert!(head.weights.values().iter().all(|w| w.abs() <= 0.125));
    }

    #[test]
    fn copy_is_deep() {
        let mut rng = seeded(2);
        let mut online = QNetwork::init(&NetworkSpec::bootstrapped(4, &[8], 2, 2), &mut rng).unwrap();
        let target = online.copy_to_target();
        let s = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(
            online.q_values(&s, HeadSelect::Head(1)).unwrap(),
            target.q_values(&s, HeadSelect::Head(1)).unwrap()
        );
        let before = target.clone();
        online.trunk_mut()[0].weights.values_mut()[0] += 1.0;
        assert_eq!(target, before);
        assert_ne!(online, target);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = seeded(3);
        let net = QNetwork::init(&NetworkSpec::noisy(3, &[5, 5], 2), &mut rng).unwrap();
        let noise = sample_noise(&mut rng, 5, 2);
        let trace = net.forward_traced(&[0.3, -0.1, 0.9]).unwrap();
        let mut g = Gradients::zeros_like(&net);
        net.backward(&trace, &[(HeadSelect::Noise(&noise), &[0.0, 0.0])], &mut g)
            .unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn backward_requires_recorded_trace() {
        let net = QNetwork::init(&NetworkSpec::bootstrapped(3, &[4], 2, 1), &mut seeded(0)).unwrap();
        let mut g = Gradients::zeros_like(&net);
        let err = net.backward(&Trace::default(), &[(HeadSelect::Head(0), &[1.0, 0.0])], &mut g);
        assert!(err.is_err());
    }

    #[test]
    fn inactive_heads_get_exactly_zero() {
        let mut rng = seeded(4);
        let net = QNetwork::init(&NetworkSpec::bootstrapped(3, &[6, 6], 2, 4), &mut rng).unwrap();
        let trace = net.forward_traced(&[0.5, 0.2, -0.7]).unwrap();
        let mut g = Gradients::zeros_like(&net);
        net.backward(&trace, &[(HeadSelect::Head(2), &[0.7, -1.3])], &mut g)
            .unwrap();
        let out = g.output();
        for k in [0, 1, 3] {
            assert!(out[2 * k].values().iter().all(|&v| v == 0.0));
            assert!(out[2 * k + 1].values().iter().all(|&v| v == 0.0));
        }
        assert!(out[4].values().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn argmax_first_wins_ties() {
        assert_eq!(argmax(&[3.0, 1.0, 2.0]), 0);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }
}
