//! Lipschitz constants of kernel feature maps: closed forms, numerical
//! oracles and random-feature experiments.

// `!(a < b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod features;
pub mod kernels;
pub mod numerics;
pub mod plot;
pub mod rng;

pub use error::{Error, Result};
