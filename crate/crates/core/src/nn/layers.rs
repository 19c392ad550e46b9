use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer, `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Tensor::zeros(vec![outputs, inputs]),
            bias: Tensor::zeros(vec![outputs]),
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weights.values_mut() {
            *w = dist.sample(rng);
        }
        for b in layer.bias.values_mut() {
            *b = dist.sample(rng);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub(crate) fn validate(&self, inputs: usize, outputs: usize) -> Result<()> {
        self.weights.check_shape(&[outputs, inputs], "dense weights")?;
        self.bias.check_shape(&[outputs], "dense bias")
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::ShapeMismatch {
                context: "dense layer input",
                expected: self.inputs(),
                actual: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.outputs());
        self.forward_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let cols = self.inputs();
        out.clear();
        let w = self.weights.values();
        for (row, b) in w.chunks_exact(cols).zip(self.bias.values()) {
            out.push(b + dot(row, x));
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f(x) = sign(x) * sqrt(|x|)`, the factorized-noise transform.
pub fn noise_transform(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Factorized Gaussian noise for a `p -> q` noisy layer.
///
/// Only the `p + q` raw standard-normal draws are stored; the transformed
/// factors are derived from them on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawNoise", into = "RawNoise")]
pub struct NoiseSample {
    eps_in: Vec<f64>,
    eps_out: Vec<f64>,
    f_in: Vec<f64>,
    f_out: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawNoise {
    eps_in: Vec<f64>,
    eps_out: Vec<f64>,
}

impl From<RawNoise> for NoiseSample {
    fn from(raw: RawNoise) -> Self {
        NoiseSample::from_raw(raw.eps_in, raw.eps_out)
    }
}

impl From<NoiseSample> for RawNoise {
    fn from(n: NoiseSample) -> Self {
        RawNoise {
            eps_in: n.eps_in,
            eps_out: n.eps_out,
        }
    }
}

impl NoiseSample {
    pub fn from_raw(eps_in: Vec<f64>, eps_out: Vec<f64>) -> Self {
        let f_in = eps_in.iter().copied().map(noise_transform).collect();
        let f_out = eps_out.iter().copied().map(noise_transform).collect();
        Self {
            eps_in,
            eps_out,
            f_in,
            f_out,
        }
    }

    /// The all-zero sample: a noisy layer evaluated with it is its mean map.
    pub fn zeros(p: usize, q: usize) -> Self {
        Self::from_raw(vec![0.0; p], vec![0.0; q])
    }

    pub fn eps_in(&self) -> &[f64] {
        &self.eps_in
    }

    pub fn eps_out(&self) -> &[f64] {
        &self.eps_out
    }

    pub fn inputs(&self) -> usize {
        self.eps_in.len()
    }

    pub fn outputs(&self) -> usize {
        self.eps_out.len()
    }

    pub fn weight_noise(&self, i: usize, j: usize) -> f64 {
        self.f_out[i] * self.f_in[j]
    }

    pub fn bias_noise(&self, i: usize) -> f64 {
        self.f_out[i]
    }

    /// Materialized `eps_w[i, j] = f(eps_out[i]) * f(eps_in[j])`.
    pub fn eps_w(&self) -> Tensor {
        let mut t = Tensor::zeros(vec![self.outputs(), self.inputs()]);
        let p = self.inputs();
        for (i, row) in t.values_mut().chunks_exact_mut(p).enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.weight_noise(i, j);
            }
        }
        t
    }

    pub fn eps_b(&self) -> Vec<f64> {
        self.f_out.clone()
    }

    pub(crate) fn f_in(&self) -> &[f64] {
        &self.f_in
    }

    pub(crate) fn f_out(&self) -> &[f64] {
        &self.f_out
    }
}

/// Draws a factorized noise sample with i.i.d. standard-normal factors.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, p: usize, q: usize) -> NoiseSample {
    let eps_in = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let eps_out = (0..q).map(|_| StandardNormal.sample(rng)).collect();
    NoiseSample::from_raw(eps_in, eps_out)
}

/// Linear layer with learned Gaussian weight perturbations:
/// `y = (mu_w + sigma_w * eps_w) x + mu_b + sigma_b * eps_b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyLayer {
    pub mu_w: Tensor,
    pub sigma_w: Tensor,
    pub mu_b: Tensor,
    pub sigma_b: Tensor,
}

impl NoisyLayer {
    pub fn zeros(p: usize, q: usize) -> Self {
        Self {
            mu_w: Tensor::zeros(vec![q, p]),
            sigma_w: Tensor::zeros(vec![q, p]),
            mu_b: Tensor::zeros(vec![q]),
            sigma_b: Tensor::zeros(vec![q]),
        }
    }

    /// Factorized-noise initialization: `mu ~ U(-1/sqrt(p), 1/sqrt(p))`,
    /// `sigma = 0.5 / sqrt(p)`.
    pub fn init<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (p as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let sigma0 = 0.5 / (p as f64).sqrt();
        let mut layer = Self::zeros(p, q);
        for w in layer.mu_w.values_mut() {
            *w = dist.sample(rng);
        }
        for b in layer.mu_b.values_mut() {
            *b = dist.sample(rng);
        }
        layer.sigma_w.fill(sigma0);
        layer.sigma_b.fill(sigma0);
        layer
    }

    pub fn inputs(&self) -> usize {
        self.mu_w.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.mu_w.shape()[0]
    }

    pub(crate) fn validate(&self, p: usize, q: usize) -> Result<()> {
        self.mu_w.check_shape(&[q, p], "noisy mu_w")?;
        self.sigma_w.check_shape(&[q, p], "noisy sigma_w")?;
        self.mu_b.check_shape(&[q], "noisy mu_b")?;
        self.sigma_b.check_shape(&[q], "noisy sigma_b")
    }

    pub(crate) fn forward_into(&self, noise: &NoiseSample, x: &[f64], out: &mut Vec<f64>) {
        let p = self.inputs();
        out.clear();
        // sum_j sigma_w[i,j] f_out[i] f_in[j] x[j] = f_out[i] * sum_j sigma_w[i,j] (f_in[j] x[j])
        let scaled: Vec<f64> = noise.f_in().iter().zip(x).map(|(f, v)| f * v).collect();
        let rows = self
            .mu_w
            .values()
            .chunks_exact(p)
            .zip(self.sigma_w.values().chunks_exact(p));
        for (i, (mu_row, sigma_row)) in rows.enumerate() {
            let fo = noise.f_out()[i];
            let y = dot(mu_row, x)
                + fo * dot(sigma_row, &scaled)
                + self.mu_b.values()[i]
                + self.sigma_b.values()[i] * fo;
            out.push(y);
        }
    }
}

/// Evaluates the noisy affine map for one fixed noise sample.
pub fn noisy_affine(layer: &NoisyLayer, noise: &NoiseSample, x: &[f64]) -> Result<Vec<f64>> {
    let (p, q) = (layer.inputs(), layer.outputs());
    layer.validate(p, q)?;
    if noise.inputs() != p || noise.outputs() != q {
        return Err(Error::ShapeMismatch {
            context: "noise sample",
            expected: p * q,
            actual: noise.inputs() * noise.outputs(),
        });
    }
    if x.len() != p {
        return Err(Error::ShapeMismatch {
            context: "noisy layer input",
            expected: p,
            actual: x.len(),
        });
    }
    let mut out = Vec::with_capacity(q);
    layer.forward_into(noise, x, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Straight-line evaluation of the displayed formula, materializing eps_w.
    fn oracle(layer: &NoisyLayer, noise: &NoiseSample, x: &[f64]) -> Vec<f64> {
        let eps_w = noise.eps_w();
        let eps_b = noise.eps_b();
        let (p, q) = (layer.inputs(), layer.outputs());
        let mut y = vec![0.0; q];
        for i in 0..q {
            let mut acc = 0.0;
            for j in 0..p {
                let w = layer.mu_w.values()[i * p + j]
                    + layer.sigma_w.values()[i * p + j] * eps_w.values()[i * p + j];
                acc += w * x[j];
            }
            y[i] = acc + layer.mu_b.values()[i] + layer.sigma_b.values()[i] * eps_b[i];
        }
        y
    }

    #[test]
    fn transform_values() {
        assert_eq!(noise_transform(4.0), 2.0);
        assert_eq!(noise_transform(-4.0), -2.0);
        assert_eq!(noise_transform(0.0), 0.0);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let a = sample_noise(&mut seeded(9), 2, 2);
        let b = sample_noise(&mut seeded(9), 2, 2);
        assert_eq!(a, b);
        assert_eq!(a.eps_w(), b.eps_w());
        let rebuilt = NoiseSample::from_raw(a.eps_in().to_vec(), a.eps_out().to_vec());
        assert_eq!(rebuilt.eps_w(), a.eps_w());
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = seeded(1);
        let n = 100_000;
        let (mut s_in, mut s2_in, mut s_out, mut s2_out) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let e = sample_noise(&mut rng, 1, 1);
            s_in += e.eps_in()[0];
            s2_in += e.eps_in()[0].powi(2);
            s_out += e.eps_out()[0];
            s2_out += e.eps_out()[0].powi(2);
        }
        let nf = n as f64;
        for (s, s2) in [(s_in, s2_in), (s_out, s2_out)] {
            let mean = s / nf;
            let var = s2 / nf - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn zero_sigma_collapses_to_mean_map() {
        let mut rng = seeded(3);
        let mut layer = NoisyLayer::init(3, 2, &mut rng);
        layer.sigma_w.fill(0.0);
        layer.sigma_b.fill(0.0);
        let noise = sample_noise(&mut rng, 3, 2);
        let x = [0.3, -1.2, 2.0];
        let y = noisy_affine(&layer, &noise, &x).unwrap();
        for i in 0..2 {
            let expected = dot(&layer.mu_w.values()[i * 3..i * 3 + 3], &x) + layer.mu_b.values()[i];
            assert!((y[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_sigma_picks_out_noise() {
        let mut layer = NoisyLayer::zeros(3, 2);
        layer.sigma_w.fill(1.0);
        layer.sigma_b.fill(1.0);
        let noise = sample_noise(&mut seeded(4), 3, 2);
        let y = noisy_affine(&layer, &noise, &[1.0, 0.0, 0.0]).unwrap();
        let eps_w = noise.eps_w();
        for i in 0..2 {
            let expected = eps_w.values()[i * 3] + noise.eps_b()[i];
            assert!((y[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = seeded(5);
        for _ in 0..20 {
            let layer = NoisyLayer::init(7, 4, &mut rng);
            let mut layer = layer;
            for s in layer.sigma_w.values_mut() {
                *s = rng.random_range(-1.0..1.0);
            }
            let noise = sample_noise(&mut rng, 7, 4);
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = noisy_affine(&layer, &noise, &x).unwrap();
            for (a, b) in y.iter().zip(oracle(&layer, &noise, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let layer = NoisyLayer::zeros(3, 2);
        let noise = NoiseSample::zeros(3, 2);
        assert!(noisy_affine(&layer, &noise, &[1.0, 2.0]).is_err());
        assert!(noisy_affine(&layer, &NoiseSample::zeros(2, 2), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn sigma_init_value() {
        let layer = NoisyLayer::init(4, 3, &mut seeded(0));
        assert!(layer.sigma_w.values().iter().all(|&s| s == 0.25));
        assert!(layer.sigma_b.values().iter().all(|&s| s == 0.25));
    }
}
