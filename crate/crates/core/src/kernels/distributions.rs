use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{ChiSquared, Distribution};

use crate::error::{invalid, Error, Result};
use crate::numerics::{cholesky, Matrix};
use crate::rng::{CounterRng, StreamKey};

/// Law of the bias `b` of a neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasDistribution {
    Uniform { lo: f64, hi: f64 },
    /// Centered Gaussian with standard deviation `sd`.
    Gaussian { sd: f64 },
    /// Dirac mass at 0.
    PointMass,
}

impl BiasDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let b = BiasDistribution::Uniform { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// Uniform phase on `[0, 2π]`.
    pub fn uniform_phase() -> Self {
        BiasDistribution::Uniform { lo: 0.0, hi: 2.0 * PI }
    }

    pub fn gaussian(sd: f64) -> Result<Self> {
        let b = BiasDistribution::Gaussian { sd };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BiasDistribution::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(invalid(format!("uniform bias needs lo < hi, got [{lo}, {hi}]")))
            }
            BiasDistribution::Gaussian { sd } if !(sd > 0.0 && sd.is_finite()) => {
                Err(invalid(format!("gaussian bias needs a positive sd, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            BiasDistribution::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
            BiasDistribution::Gaussian { sd } => sd,
            BiasDistribution::PointMass => 0.0,
        }
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        !matches!(self, BiasDistribution::PointMass)
    }

    #[inline]
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match *self {
            BiasDistribution::Uniform { lo, hi } => rng.uniform_range(lo, hi),
            BiasDistribution::Gaussian { sd } => sd * rng.normal(),
            BiasDistribution::PointMass => 0.0,
        }
    }
}

impl fmt::Display for BiasDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BiasDistribution::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            BiasDistribution::Gaussian { sd } => write!(f, "gaussian:{sd}"),
            BiasDistribution::PointMass => f.write_str("point:0"),
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| invalid(format!("cannot parse {what} from '{s}'")))
}

impl FromStr for BiasDistribution {
    type Err = Error;

    /// `uniform:a:b`, `gaussian:sd`, or `point:0`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["uniform", a, b] => BiasDistribution::uniform(parse_f64(a, "bias lo")?, parse_f64(b, "bias hi")?),
            ["gaussian", sd] => BiasDistribution::gaussian(parse_f64(sd, "bias sd")?),
            ["point", at] if parse_f64(at, "point mass")? == 0.0 => Ok(BiasDistribution::PointMass),
            ["point", _] => Err(invalid("only a point mass at 0 is supported")),
            _ => Err(invalid(format!(
                "unknown bias '{s}' (expected uniform:a:b, gaussian:sd, point:0)"
            ))),
        }
    }
}

/// Mercer spectra that are stored analytically and cannot be sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteSpectrum {
    /// Brownian-motion kernel `min(x, y)` on `(0, 1)`.
    Wiener,
}

impl DiscreteSpectrum {
    /// `1/λ_n`, kept in reciprocal form so products with `φ_n′²` stay exact.
    pub fn inverse_eigenvalue(&self, n: u64) -> f64 {
        match self {
            DiscreteSpectrum::Wiener => {
                let a = (n as f64 - 0.5) * PI;
                a * a
            }
        }
    }

    pub fn eigenvalue(&self, n: u64) -> f64 {
        self.inverse_eigenvalue(n).recip()
    }
}

/// Law of the weight vector `w`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightDistribution {
    /// `N(0, γ² I_d)`.
    IsotropicGaussian { gamma: f64, dim: usize },
    /// `N(0, Σ)`.
    GaussianCov { cov: Matrix, chol: Matrix },
    /// Multivariate Student `t_dof(0, scale)`.
    StudentT { dof: f64, scale: Matrix, chol: Matrix },
    /// Multivariate Cauchy, the `dof = 1` Student law with identity scale.
    Cauchy { dim: usize },
    DiscreteSpectrum(DiscreteSpectrum),
}

/// Whether `E‖w‖²` is finite, and the covariance when it is.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentStatus {
    Finite(Matrix),
    Infinite,
}

impl MomentStatus {
    pub fn is_finite(&self) -> bool {
        matches!(self, MomentStatus::Finite(_))
    }
}

impl WeightDistribution {
    pub fn isotropic_gaussian(gamma: f64, dim: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(WeightDistribution::IsotropicGaussian { gamma, dim })
    }

    pub fn gaussian_cov(cov: Matrix) -> Result<Self> {
        let chol = cholesky(&cov)?;
        Ok(WeightDistribution::GaussianCov { cov, chol })
    }

    /// Student law with `dof` degrees of freedom (`2ν` for a Matérn-ν kernel).
    pub fn student_t(dof: f64, scale: Matrix) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(invalid(format!("degrees of freedom must be positive, got {dof}")));
        }
        let chol = cholesky(&scale)?;
        Ok(WeightDistribution::StudentT { dof, scale, chol })
    }

    pub fn cauchy(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(WeightDistribution::Cauchy { dim })
    }

    /// Dimension of `w`; `None` for discrete spectra.
    pub fn dim(&self) -> Option<usize> {
        match self {
            WeightDistribution::IsotropicGaussian { dim, .. } | WeightDistribution::Cauchy { dim } => Some(*dim),
            WeightDistribution::GaussianCov { cov, .. } => Some(cov.rows()),
            WeightDistribution::StudentT { scale, .. } => Some(scale.rows()),
            WeightDistribution::DiscreteSpectrum(_) => None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            WeightDistribution::IsotropicGaussian { .. } => "isotropic-gaussian",
            WeightDistribution::GaussianCov { .. } => "gaussian-cov",
            WeightDistribution::StudentT { .. } => "student-t",
            WeightDistribution::Cauchy { .. } => "cauchy",
            WeightDistribution::DiscreteSpectrum(_) => "discrete-spectrum",
        }
    }

    /// Analytic classification of the second moment.
    ///
    /// A discrete Mercer spectrum has no weight vector; it is reported as
    /// `Infinite` because its derivative series diverges (see
    /// [`crate::analytic::wiener_divergence`]).
    pub fn second_moment_status(&self) -> MomentStatus {
        match self {
            WeightDistribution::IsotropicGaussian { gamma, dim } => {
                MomentStatus::Finite(Matrix::identity(*dim).scaled(gamma * gamma))
            }
            WeightDistribution::GaussianCov { cov, .. } => MomentStatus::Finite(cov.clone()),
            WeightDistribution::StudentT { dof, scale, .. } if *dof > 2.0 => {
                MomentStatus::Finite(scale.scaled(dof / (dof - 2.0)))
            }
            WeightDistribution::StudentT { .. }
            | WeightDistribution::Cauchy { .. }
            | WeightDistribution::DiscreteSpectrum(_) => MomentStatus::Infinite,
        }
    }

    /// Draws one weight vector into `out`.
    pub fn sample_into(&self, rng: &mut CounterRng, out: &mut [f64]) -> Result<()> {
        match self {
            WeightDistribution::IsotropicGaussian { gamma, .. } => {
                for w in out.iter_mut() {
                    *w = gamma * rng.normal();
                }
            }
            WeightDistribution::GaussianCov { chol, .. } => correlated_normal(chol, rng, out),
            WeightDistribution::StudentT { dof, chol, .. } => {
                correlated_normal(chol, rng, out);
                let scale = student_scale(*dof, rng)?;
                out.iter_mut().for_each(|w| *w *= scale);
            }
            WeightDistribution::Cauchy { .. } => {
                for w in out.iter_mut() {
                    *w = rng.normal();
                }
                let scale = student_scale(1.0, rng)?;
                out.iter_mut().for_each(|w| *w *= scale);
            }
            WeightDistribution::DiscreteSpectrum(_) => {
                return Err(Error::UnsupportedDistribution(
                    "discrete spectra are diagnostics only and cannot be sampled".into(),
                ))
            }
        }
        Ok(())
    }
}

fn correlated_normal(chol: &Matrix, rng: &mut CounterRng, out: &mut [f64]) {
    let d = chol.rows();
    let mut z = [0.0f64; 16];
    let mut heap;
    let z: &mut [f64] = if d <= 16 {
        &mut z[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    for v in z.iter_mut() {
        *v = rng.normal();
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = chol.row(i)[..=i].iter().zip(z.iter()).map(|(l, zi)| l * zi).sum();
    }
}

/// `1 / sqrt(χ²_dof / dof)`.
fn student_scale(dof: f64, rng: &mut CounterRng) -> Result<f64> {
    let chi = ChiSquared::new(dof).map_err(|e| invalid(format!("chi-square({dof}): {e}")))?;
    let c: f64 = chi.sample(rng);
    Ok((dof / c).sqrt())
}

/// Draws `n` i.i.d. pairs `(w_i, b_i)`. Pair `i` comes from the child stream
/// `stream.derive(i)`, so a draw of size `n` is a prefix of any larger draw.
pub fn sample_features(
    dist: &WeightDistribution,
    bias: &BiasDistribution,
    n: usize,
    stream: StreamKey,
) -> Result<(Matrix, Vec<f64>)> {
    let d = dist
        .dim()
        .ok_or_else(|| Error::UnsupportedDistribution("discrete spectra cannot be sampled".into()))?;
    bias.validate()?;
    let mut weights = Matrix::zeros(n, d);
    let mut biases = vec![0.0; n];
    let mut row = vec![0.0; d];
    for i in 0..n {
        let mut rng = stream.derive(i as u64).rng();
        dist.sample_into(&mut rng, &mut row)?;
        for (j, &v) in row.iter().enumerate() {
            weights[(i, j)] = v;
        }
        biases[i] = bias.sample(&mut rng);
    }
    Ok((weights, biases))
}

/// Deterministic draw of `n` weight rows and biases from `seed`.
pub fn sample_weights(
    dist: &WeightDistribution,
    bias: &BiasDistribution,
    n: usize,
    seed: u64,
) -> Result<(Matrix, Vec<f64>)> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    sample_features(dist, bias, n, StreamKey::from_seed(seed))
}
