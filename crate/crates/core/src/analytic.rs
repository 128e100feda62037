//! Exact Lipschitz constants of kernel feature maps, classical upper bounds,
//! divergence diagnostics and kernel-side numerical oracles.

use std::fmt;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels::{
    Activation, BiasDistribution, DiscreteSpectrum, MomentStatus, ShiftInvariantKernel, WeightDistribution,
};
use crate::numerics::{
    hessian_fd, maximize_scalar, sym_eig_max, Panels, PiecewiseExpectation, DEFAULT_HESSIAN_STEP,
};
use crate::rng::StreamKey;

/// Default quadrature order; composite panels use `order / 8` nodes each.
pub const DEFAULT_ORDER: usize = 64;
/// Cap of the order-doubling ladder.
pub const MAX_ORDER: usize = 256;
/// Successive-order agreement that stops the ladder.
pub const LADDER_TOLERANCE: f64 = 1e-8;
/// Default tolerance of the search over `r = ‖x‖`.
pub const DEFAULT_R_TOL: f64 = 1e-6;

/// How a Lipschitz value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Supremum over `r` of the curvature profile `ν(r)`, by quadrature.
    Quadrature,
    /// `√(κ(0) λ_max(Cov w))`.
    Covariance,
    /// `√(λ_max(−∇²κ(0)))` by finite differences.
    HessianFd,
    /// `Lip(σ)·√(E‖w‖²)`.
    UpperBound,
    /// The spectral law has no finite second moment.
    Divergent,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::Covariance => "covariance",
            Method::HessianFd => "hessian-fd",
            Method::UpperBound => "upper-bound",
            Method::Divergent => "divergent",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lipschitz constant of a feature map. `value` is `+∞` exactly when
/// `method` is [`Method::Divergent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub value: f64,
    /// Maximizing `r = ‖x‖`, present only for [`Method::Quadrature`].
    pub argmax_r: Option<f64>,
    pub method: Method,
    pub error_estimate: f64,
}

impl LipschitzReport {
    pub fn divergent() -> Self {
        LipschitzReport { value: f64::INFINITY, argmax_r: None, method: Method::Divergent, error_estimate: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `[0, 10·γ·(1 + σ_b)]`, with `σ_b` the bias standard deviation.
pub fn default_r_domain(gamma: f64, bias: &BiasDistribution) -> (f64, f64) {
    (0.0, 10.0 * gamma * (1.0 + bias.std_dev()))
}

fn check_order(order: usize) -> Result<usize> {
    if !(8..=MAX_ORDER).contains(&order) {
        return Err(invalid(format!("quadrature order must be in 8..={MAX_ORDER}, got {order}")));
    }
    Ok(order)
}

/// `E[g(ζ)·σ′(ζr + b)²]` for `ζ ~ N(0, γ²)` and `b ~ bias`, on composite
/// Legendre panels split at every activation kink.
struct CurvatureIntegrator {
    act: Activation,
    engine: PiecewiseExpectation,
}

impl CurvatureIntegrator {
    fn new(act: Activation, gamma: f64, bias: BiasDistribution, order: usize) -> Result<Self> {
        let engine = PiecewiseExpectation::new(gamma, bias, (order / 8).max(1))?;
        Ok(CurvatureIntegrator { act, engine })
    }

    fn moment<G: Fn(f64) -> f64>(&self, g: G, r: f64) -> f64 {
        let act = self.act;
        let gamma = self.engine.gamma();
        let bias = *self.engine.bias();
        let kinks = act.kinks();

        // Length scale on which b ↦ σ′(ζr + b)² varies after smoothing by the bias law.
        let act_scale = act.derivative_scale().unwrap_or(f64::INFINITY);
        let (smooth_scale, bias_max_width) = match bias {
            BiasDistribution::Gaussian { sd } => (act_scale.min(sd), (2.0 * sd).min(2.0 * act_scale)),
            BiasDistribution::Uniform { .. } => (act_scale, 2.0 * act_scale),
            BiasDistribution::PointMass => (act_scale, f64::INFINITY),
        };
        let mut zeta_max_width = 2.0 * gamma;
        if r > 0.0 && smooth_scale.is_finite() {
            zeta_max_width = zeta_max_width.min(2.0 * smooth_scale / r);
        }
        let mut zeta_breaks = Vec::new();
        if r > 0.0 {
            for &k in kinks.iter() {
                match bias {
                    BiasDistribution::Uniform { lo, hi } => {
                        zeta_breaks.push((k - lo) / r);
                        zeta_breaks.push((k - hi) / r);
                    }
                    BiasDistribution::PointMass => zeta_breaks.push(k / r),
                    BiasDistribution::Gaussian { .. } => {}
                }
            }
        }
        let panels = Panels { zeta_breaks, zeta_max_width, bias_max_width };
        self.engine.expectation(
            |z, b| {
                let d = act.derivative(z * r + b);
                g(z) * d * d
            },
            &panels,
            |z, out| out.extend(kinks.iter().map(|&k| k - z * r)),
        )
    }

    fn nu(&self, r: f64) -> f64 {
        self.moment(|z| z * z, r)
    }
}

/// Result of an integral evaluated along the order-doubling ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderValue {
    pub value: f64,
    /// `|result(order) − result(order/2)|` at the final order.
    pub error_estimate: f64,
    pub order: usize,
}

fn ladder<F>(act: Activation, gamma: f64, bias: &BiasDistribution, order: usize, f: F) -> Result<LadderValue>
where
    F: Fn(&CurvatureIntegrator) -> f64,
{
    let mut current = order;
    let mut value = f(&CurvatureIntegrator::new(act, gamma, *bias, current)?);
    let mut error_estimate = f64::INFINITY;
    while current < MAX_ORDER {
        let next = (current * 2).min(MAX_ORDER);
        let next_value = f(&CurvatureIntegrator::new(act, gamma, *bias, next)?);
        error_estimate = (next_value - value).abs();
        value = next_value;
        current = next;
        if error_estimate < LADDER_TOLERANCE {
            break;
        }
    }
    if !value.is_finite() {
        return Err(Error::EvaluationFailure(format!("non-finite quadrature value {value}")));
    }
    Ok(LadderValue { value, error_estimate, order: current })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Curvature profile `ν(r) = E[ζ²σ′(ζr + b)²]`, `ζ ~ N(0, γ²)`, `b ~ bias`.
pub fn nu_function(act: Activation, gamma: f64, bias: &BiasDistribution, r: f64) -> Result<f64> {
    nu_function_detailed(act, gamma, bias, r, DEFAULT_ORDER).map(|v| v.value)
}

pub fn nu_function_detailed(
    act: Activation,
    gamma: f64,
    bias: &BiasDistribution,
    r: f64,
    order: usize,
) -> Result<LadderValue> {
    check_gamma(gamma)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("r must be a finite non-negative number, got {r}")));
    }
    ladder(act, gamma, bias, check_order(order)?, |q| q.nu(r))
}

/// Rejects configurations outside the exact formula's hypotheses: the
/// activation must be differentiable everywhere unless the bias law is
/// absolutely continuous.
pub fn check_rnn_hypotheses(act: Activation, bias: &BiasDistribution) -> Result<()> {
    bias.validate()?;
    if !act.is_everywhere_differentiable() && !bias.is_absolutely_continuous() {
        return Err(Error::HypothesisViolation(format!(
            "activation '{act}' has kinks at {:?} and the bias law '{bias}' is not absolutely continuous; \
             the exact formula needs an absolutely continuous weight law or an everywhere differentiable activation",
            act.kinks()
        )));
    }
    Ok(())
}

/// `Lip(φ_k) = sup_{r ∈ r_domain} √ν(r)` for an infinitely wide one-layer
/// network with `w ~ N(0, γ²I)`.
pub fn rnn_lipschitz(
    act: Activation,
    gamma: f64,
    bias: &BiasDistribution,
    r_domain: (f64, f64),
    tol: f64,
) -> Result<LipschitzReport> {
    rnn_lipschitz_with_order(act, gamma, bias, r_domain, tol, DEFAULT_ORDER)
}

pub fn rnn_lipschitz_with_order(
    act: Activation,
    gamma: f64,
    bias: &BiasDistribution,
    r_domain: (f64, f64),
    tol: f64,
    order: usize,
) -> Result<LipschitzReport> {
    check_gamma(gamma)?;
    check_rnn_hypotheses(act, bias)?;
    let order = check_order(order)?;
    let (lo, hi) = r_domain;
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(invalid(format!("r domain must satisfy 0 <= r_min < r_max, got [{lo}, {hi}]")));
    }
    let search = CurvatureIntegrator::new(act, gamma, *bias, order)?;
    let best = maximize_scalar(|r| search.nu(r), r_domain, tol)?;
    let r = best.argmax;
    let refined = ladder(act, gamma, bias, order, |q| q.nu(r))?;
    let nu = refined.value.max(0.0);
    let value = nu.sqrt();
    // d√ν = dν / (2√ν).
    let error_estimate = if value > 0.0 { refined.error_estimate / (2.0 * value) } else { refined.error_estimate.sqrt() };
    Ok(LipschitzReport { value, argmax_r: Some(r), method: Method::Quadrature, error_estimate })
}

/// Both sides of the second-moment decomposition of the directional
/// derivative `(wᵀz)·σ′(wᵀx + b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition {
    /// Monte-Carlo estimate of `E[((wᵀz)σ′(wᵀx + b))²]`.
    pub lhs: f64,
    /// Standard error of `lhs`.
    pub standard_error: f64,
    /// `((xᵀz)²/‖x‖²)·β(‖x‖) + ‖z‖²γ²α(‖x‖)` by quadrature.
    pub rhs: f64,
    /// `α(a) = E[σ′(aζ + b)²]`.
    pub alpha: f64,
    /// `β(a) = E[(ζ² − γ²)σ′(aζ + b)²]`. The variant centred at `ζ² − 1`
    /// agrees only at `γ = 1`; the supremum formula is the same for both.
    pub beta: f64,
}

const MC_CHUNK: usize = 1 << 16;

/// Compares a Monte-Carlo estimate of `E[((wᵀz)σ′(wᵀx+b))²]`, `w ~ N(0, γ²I)`,
/// with its split into the `α` and `β` moments along `x`.
pub fn variance_decomposition_check(
    act: Activation,
    gamma: f64,
    bias: &BiasDistribution,
    x: &[f64],
    z: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<VarianceDecomposition> {
    check_gamma(gamma)?;
    check_rnn_hypotheses(act, bias)?;
    if x.len() != z.len() || x.is_empty() {
        return Err(invalid("x and z must be non-empty and of equal dimension"));
    }
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let zz: f64 = z.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return Err(invalid("x must be non-zero (use nu_function for x = 0)"));
    }
    if zz == 0.0 {
        return Err(invalid("z must be non-zero"));
    }
    if mc_samples < 2 {
        return Err(invalid("need at least two Monte-Carlo samples"));
    }
    let a = xx.sqrt();
    let xz: f64 = x.iter().zip(z).map(|(p, q)| p * q).sum();
    let g2 = gamma * gamma;
    let alpha = ladder(act, gamma, bias, DEFAULT_ORDER, |q| q.moment(|_| 1.0, a))?.value;
    let beta = ladder(act, gamma, bias, DEFAULT_ORDER, |q| q.moment(|t| t * t - g2, a))?.value;
    let rhs = xz * xz / xx * beta + zz * g2 * alpha;

    let key = StreamKey::from_seed(seed);
    let d = x.len();
    let chunks = mc_samples.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = key.derive(c as u64).rng();
            let count = MC_CHUNK.min(mc_samples - c * MC_CHUNK);
            let mut w = vec![0.0; d];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                for wi in w.iter_mut() {
                    *wi = gamma * rng.normal();
                }
                let b = bias.sample(&mut rng);
                let wx: f64 = w.iter().zip(x).map(|(p, q)| p * q).sum();
                let wz: f64 = w.iter().zip(z).map(|(p, q)| p * q).sum();
                let t = wz * act.derivative(wx + b);
                let t2 = t * t;
                s1 += t2;
                s2 += t2 * t2;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    let n = mc_samples as f64;
    let lhs = s1 / n;
    let var = (s2 / n - lhs * lhs).max(0.0) * n / (n - 1.0);
    Ok(VarianceDecomposition { lhs, standard_error: (var / n).sqrt(), rhs, alpha, beta })
}

/// `√(κ(0) λ_max(Cov w))` when the spectral law has a finite second moment,
/// `+∞` otherwise.
pub fn shift_invariant_lipschitz(kernel: &ShiftInvariantKernel) -> Result<LipschitzReport> {
    match kernel.spectral().second_moment_status() {
        MomentStatus::Finite(cov) => {
            let lambda = sym_eig_max(&cov)?;
            Ok(LipschitzReport {
                value: (kernel.kappa0() * lambda).sqrt(),
                argmax_r: None,
                method: Method::Covariance,
                error_estimate: 0.0,
            })
        }
        MomentStatus::Infinite => Ok(LipschitzReport::divergent()),
    }
}

fn require_finite_moment(dist: &WeightDistribution, what: &str) -> Result<crate::numerics::Matrix> {
    match dist.second_moment_status() {
        MomentStatus::Finite(c) => Ok(c),
        MomentStatus::Infinite => Err(Error::HypothesisViolation(format!(
            "{what} requires a finite second moment, but the {} law has none",
            dist.family_name()
        ))),
    }
}

/// `√(λ_max(−∇²κ(0)))` with a finite-difference Hessian.
pub fn hessian_lipschitz_oracle(kernel: &ShiftInvariantKernel, h: f64) -> Result<LipschitzReport> {
    require_finite_moment(kernel.spectral(), "the Hessian oracle")?;
    let est = hessian_fd(|d| kernel.kappa_unchecked(d), kernel.dim(), h)?;
    let neg = est.matrix.scaled(-1.0).symmetrized();
    let lambda = sym_eig_max(&neg)?;
    if lambda < 0.0 {
        return Err(Error::NumericalFailure(format!("−∇²κ(0) has negative top eigenvalue {lambda}")));
    }
    let value = lambda.sqrt();
    let error_estimate = if value > 0.0 { est.error_estimate / (2.0 * value) } else { est.error_estimate.sqrt() };
    Ok(LipschitzReport { value, argmax_r: None, method: Method::HessianFd, error_estimate })
}

/// Hessian oracle with the default step.
pub fn hessian_lipschitz_oracle_default(kernel: &ShiftInvariantKernel) -> Result<LipschitzReport> {
    hessian_lipschitz_oracle(kernel, DEFAULT_HESSIAN_STEP)
}

/// Square root of the mixed second difference of `k` along `(z, z)` at
/// `(x, x)`: a feature-free lower bound on the Lipschitz constant at `x`.
pub fn diagonal_curvature_oracle<K>(k: K, x: &[f64], z: &[f64], h: f64) -> Result<f64>
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    if x.len() != z.len() || x.is_empty() {
        return Err(invalid("x and z must be non-empty and of equal dimension"));
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(invalid(format!("direction must be a unit vector, has norm {norm}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - h * b).collect();
    let mixed = (k(&plus, &plus) - k(&plus, &minus) - k(&minus, &plus) + k(&minus, &minus)) / (4.0 * h * h);
    if mixed.is_nan() {
        return Err(Error::EvaluationFailure("kernel returned NaN".into()));
    }
    if mixed < -1e-8 {
        return Err(Error::NumericalFailure(format!(
            "mixed second difference {mixed} is negative; the kernel is not positive definite"
        )));
    }
    Ok(mixed.max(0.0).sqrt())
}

/// `Lip(σ)·√(trace Cov w)`, the classical bound on the feature-map constant.
pub fn feature_upper_bound(act: Activation, dist: &WeightDistribution) -> Result<LipschitzReport> {
    let cov = require_finite_moment(dist, "the upper bound")?;
    Ok(LipschitzReport {
        value: act.lipschitz_bound() * cov.trace().sqrt(),
        argmax_r: None,
        method: Method::UpperBound,
        error_estimate: 0.0,
    })
}

/// Partial sum `Σ_{n ≤ M} λ_n φ_n′(0)²` for the Brownian-motion kernel
/// `min(x, y)` with `φ_n(x) = √2 sin((n − ½)πx)`. Every term equals 2, so the
/// sum is exactly `2M` and grows without bound.
pub fn wiener_divergence(m: u64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("need at least one term"));
    }
    let spectrum = DiscreteSpectrum::Wiener;
    let mut total = 0.0;
    for n in 1..=m {
        // λ_n = 1/a², φ_n′(0)² = 2a²; the quotient form keeps each term exact.
        let inv = spectrum.inverse_eigenvalue(n);
        total += 2.0 * inv / inv;
    }
    Ok(total)
}

/// Truncated Mercer series `Σ_{n ≤ M} λ_n φ_n(x) φ_n(y)` of `min(x, y)`.
pub fn wiener_kernel_truncated(x: f64, y: f64, m: u64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("need at least one term"));
    }
    let spectrum = DiscreteSpectrum::Wiener;
    let mut total = 0.0;
    for n in 1..=m {
        let a = (n as f64 - 0.5) * std::f64::consts::PI;
        total += 2.0 * (a * x).sin() * (a * y).sin() / spectrum.inverse_eigenvalue(n);
    }
    Ok(total)
}
