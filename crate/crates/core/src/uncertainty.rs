//! State-uncertainty estimators.
//!
//! * Divergence: Jensen-Shannon divergence between the softmax policies of the
//!   bootstrapped heads, `H(mean_k pi_k) - mean_k H(pi_k)` in nats, bounded by `ln K`.
//! * Variance: predictive variance of the noisy output layer at the greedy
//!   action, `sum_j (sigma_w[a, j] phi_j)^2 + sigma_b[a]^2`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::nn::{HeadSelect, NoisyLayer, QNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    Divergence,
    Variance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyValue {
    pub value: f64,
    pub kind: UncertaintyKind,
}

/// Softmax over actions, shifted by the maximum for stability.
pub fn softmax_policy(q_values: &[f64]) -> Vec<f64> {
    let max = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q_values.iter().map(|q| (q - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Jensen-Shannon divergence of `K >= 2` distributions over the same support.
pub fn js_divergence(policies: &[Vec<f64>]) -> Result<UncertaintyValue> {
    let k = policies.len();
    if k < 2 {
        return Err(contract(format!("JS divergence needs at least 2 policies, got {k}")));
    }
    let n = policies[0].len();
    for p in policies {
        if p.len() != n {
            return Err(Error::ShapeMismatch {
                context: "policy length",
                expected: n,
                actual: p.len(),
            });
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(contract(format!("not a probability distribution: {p:?}")));
        }
    }
    let mut mixture = vec![0.0; n];
    for p in policies {
        for (m, x) in mixture.iter_mut().zip(p) {
            *m += x / k as f64;
        }
    }
    let mean_entropy = policies.iter().map(|p| entropy(p)).sum::<f64>() / k as f64;
    let value = (entropy(&mixture) - mean_entropy).clamp(0.0, (k as f64).ln());
    Ok(UncertaintyValue {
        value,
        kind: UncertaintyKind::Divergence,
    })
}

/// Divergence uncertainty from raw per-head Q-values.
pub fn head_divergence(q_heads: &[Vec<f64>]) -> Result<UncertaintyValue> {
    let policies: Vec<Vec<f64>> = q_heads.iter().map(|q| softmax_policy(q)).collect();
    js_divergence(&policies)
}

/// `Var[Q(s, a)]` for every action under the layer's independent Gaussian
/// weight posterior.
pub fn action_variances(layer: &NoisyLayer, features: &[f64]) -> Result<Vec<f64>> {
    let p = layer.inputs();
    if features.len() != p {
        return Err(Error::ShapeMismatch {
            context: "features for predictive variance",
            expected: p,
            actual: features.len(),
        });
    }
    Ok(layer
        .sigma_w
        .values()
        .chunks_exact(p)
        .zip(layer.sigma_b.values())
        .map(|(row, sb)| {
            row.iter()
                .zip(features)
                .map(|(s, phi)| (s * phi).powi(2))
                .sum::<f64>()
                + sb * sb
        })
        .collect())
}

/// Predictive variance at the action with the largest mean Q-value.
pub fn predictive_variance(layer: &NoisyLayer, features: &[f64]) -> Result<UncertaintyValue> {
    let vars = action_variances(layer, features)?;
    let p = layer.inputs();
    let means: Vec<f64> = layer
        .mu_w
        .values()
        .chunks_exact(p)
        .zip(layer.mu_b.values())
        .map(|(row, b)| row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b)
        .collect();
    let best = crate::nn::argmax(&means);
    Ok(UncertaintyValue {
        value: vars[best],
        kind: UncertaintyKind::Variance,
    })
}

/// The estimator matching the network's variant, evaluated at `state`.
pub fn state_uncertainty(net: &QNetwork, state: &[f64]) -> Result<UncertaintyValue> {
    let features = net.features(state)?;
    match net.noisy_layer() {
        Some(layer) => predictive_variance(layer, &features),
        None => {
            let heads = net.all_heads_from_features(&features)?;
            if heads.len() < 2 {
                // A single head cannot disagree with itself.
                return Ok(UncertaintyValue {
                    value: 0.0,
                    kind: UncertaintyKind::Divergence,
                });
            }
            head_divergence(&heads)
        }
    }
}

/// Mean Q-values alongside the uncertainty, sharing one trunk evaluation.
pub fn q_and_uncertainty(net: &QNetwork, state: &[f64]) -> Result<(Vec<f64>, UncertaintyValue)> {
    let features = net.features(state)?;
    let q = net.q_from_features(&features, HeadSelect::Mean)?;
    let u = match net.noisy_layer() {
        Some(layer) => predictive_variance(layer, &features)?,
        None => {
            let heads = net.all_heads_from_features(&features)?;
            if heads.len() < 2 {
                UncertaintyValue {
                    value: 0.0,
                    kind: UncertaintyKind::Divergence,
                }
            } else {
                head_divergence(&heads)?
            }
        }
    };
    Ok((q, u))
}
