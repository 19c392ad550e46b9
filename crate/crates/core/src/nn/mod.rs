//! Minimal neural-network engine for small fixed-topology Q-networks.
//!
//! Everything is `f64` and hand-differentiated: a [`QNetwork`] is a ReLU MLP
//! trunk followed by either `K` independent dense heads (bootstrapped variant)
//! or one factorized-noise linear layer (noisy variant).

mod adam;
pub mod checkpoint;
mod layers;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::{noise_transform, noisy_affine, sample_noise, DenseLayer, NoiseSample, NoisyLayer};
pub use network::{argmax, Gradients, HeadSelect, NetworkSpec, Output, OutputKind, QNetwork, Trace};
pub use tensor::Tensor;
