//! Activations, weight and bias laws, and stationary kernels.

pub mod activation;
pub mod distributions;
pub mod shift_invariant;

pub use activation::Activation;
pub use distributions::{
    sample_features, sample_weights, BiasDistribution, DiscreteSpectrum, MomentStatus, WeightDistribution,
};
pub use shift_invariant::{KernelFamily, ShiftInvariantKernel, SigmaSpec};
