use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Scalar nonlinearity `σ` of a neuron `σ(wᵀx + b)`.
///
/// At points where `σ` is not differentiable the derivative is defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// `u ↦ √(2κ(0))·cos(u)`, the random Fourier feature of a shift-invariant
    /// kernel with `κ(0) = kappa0`.
    ScaledCos { kappa0: f64 },
}

impl Activation {
    /// `√2·cos`, the unit-variance random Fourier feature.
    pub const fn cosine() -> Self {
        Activation::ScaledCos { kappa0: 1.0 }
    }

    pub fn scaled_cos(kappa0: f64) -> Result<Self> {
        if !(kappa0 > 0.0 && kappa0.is_finite()) {
            return Err(invalid(format!("kappa(0) must be positive, got {kappa0}")));
        }
        Ok(Activation::ScaledCos { kappa0 })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::ScaledCos { .. } => "cos",
        }
    }

    #[inline]
    fn amplitude(kappa0: f64) -> f64 {
        (2.0 * kappa0).sqrt()
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Activation::Identity => u,
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
            Activation::ScaledCos { kappa0 } => Self::amplitude(kappa0) * u.cos(),
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let c = u.cosh();
                1.0 / (c * c)
            }
            Activation::ScaledCos { kappa0 } => -Self::amplitude(kappa0) * u.sin(),
        }
    }

    /// `Lip(σ)`.
    pub fn lipschitz_bound(&self) -> f64 {
        match *self {
            Activation::Identity | Activation::Relu | Activation::Tanh => 1.0,
            Activation::ScaledCos { kappa0 } => Self::amplitude(kappa0),
        }
    }

    /// Points where `σ` is not differentiable.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Activation::Relu => &[0.0],
            _ => &[],
        }
    }

    pub fn is_everywhere_differentiable(&self) -> bool {
        self.kinks().is_empty()
    }

    /// Length scale on which `σ′²` varies, or `None` when `σ′²` is
    /// piecewise constant between kinks.
    pub fn derivative_scale(&self) -> Option<f64> {
        match self {
            Activation::Identity | Activation::Relu => None,
            Activation::Tanh | Activation::ScaledCos { .. } => Some(1.0),
        }
    }

    /// Identifier used by the binary feature-map layout.
    pub fn id(&self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::ScaledCos { .. } => 3,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            3 => Ok(Activation::cosine()),
            _ => Err(invalid(format!("unknown activation id {id}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Activation::ScaledCos { kappa0 } if kappa0 != 1.0 => write!(f, "cos:{kappa0}"),
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "cos" => Ok(Activation::cosine()),
            other => match other.strip_prefix("cos:") {
                Some(k) => Activation::scaled_cos(
                    k.parse().map_err(|_| invalid(format!("bad kappa(0) in activation '{other}'")))?,
                ),
                None => Err(invalid(format!(
                    "unknown activation '{other}' (expected identity, relu, tanh, cos)"
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Tanh,
        Activation::ScaledCos { kappa0: 1.0 },
        Activation::ScaledCos { kappa0: 2.5 },
    ];

    #[test]
    fn lipschitz_bound_holds_on_random_pairs() {
        let mut rng = StreamKey::from_seed(21).rng();
        for act in ALL {
            for _ in 0..10_000 {
                let u = rng.uniform_range(-20.0, 20.0);
                let v = u + rng.normal();
                let lhs = (act.value(u) - act.value(v)).abs();
                assert!(lhs <= act.lipschitz_bound() * (u - v).abs() + 1e-12, "{act}");
            }
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let h = 1e-5;
        let mut rng = StreamKey::from_seed(8).rng();
        for act in ALL {
            for _ in 0..2_000 {
                let u = rng.uniform_range(-6.0, 6.0);
                let fd = (act.value(u + h) - act.value(u - h)) / (2.0 * h);
                let near_kink = act.kinks().iter().any(|k| (u - k).abs() <= h);
                let allowed = 1e-6 + if near_kink { act.lipschitz_bound() } else { 0.0 };
                assert!((act.derivative(u) - fd).abs() <= allowed, "{act} at {u}");
            }
        }
    }

    #[test]
    fn relu_derivative_is_zero_at_kink() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for act in ALL {
            let back: Activation = act.to_string().parse().unwrap();
            assert_eq!(back, act);
        }
        assert!("softplus".parse::<Activation>().is_err());
        assert!("cos:-1".parse::<Activation>().is_err());
        for act in &ALL[..4] {
            assert_eq!(Activation::from_id(act.id()).unwrap(), *act);
        }
    }
}
