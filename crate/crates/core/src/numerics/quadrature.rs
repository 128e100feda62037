//! Gauss–Hermite and Gauss–Legendre rules, plus the two-dimensional
//! expectations over `ζ ~ N(0, γ²)` and a bias law.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::kernels::BiasDistribution;

const MAX_NODES: usize = 256;
const NEWTON_MAX_ITER: usize = 100;

/// Weight function a rule is exact against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureTag {
    /// `e^{-t²}` on the real line.
    GaussHermite,
    /// Lebesgue measure on `[a, b]`.
    GaussLegendre { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    measure: MeasureTag,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn measure(&self) -> MeasureTag {
        self.measure
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i f(t_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// Maps a Legendre rule on `[a, b]` onto `[lo, hi]`. Returns `(node, weight)` pairs.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (a, b) = match self.measure {
            MeasureTag::GaussLegendre { a, b } => (a, b),
            MeasureTag::GaussHermite => panic!("only Legendre rules can be remapped"),
        };
        let scale = (hi - lo) / (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (lo + (t - a) * scale, w * scale))
    }
}

/// `n`-point Gauss–Hermite rule for the weight `e^{-t²}`.
///
/// Roots are bracketed and refined on the orthonormal Hermite recurrence,
/// which keeps the weights representable up to `n = 256`.
pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_NODES {
        return Err(invalid(format!(
            "Gauss-Hermite order must be in 1..={MAX_NODES}, got {n}"
        )));
    }
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let m = n / 2;
    // Positive roots: bracket sign changes on a grid finer than the
    // smallest root spacing, then bisect and polish with Newton.
    let step = 0.25 / (2.0 * nf + 1.0).sqrt();
    let z_max = (2.0 * nf + 1.0).sqrt() + 1.0;
    let mut roots = Vec::with_capacity(m);
    let mut lo = 0.5 * step;
    let mut f_lo = hermite_orthonormal(n, lo, pim4).0;
    while lo < z_max && roots.len() < m {
        let hi = lo + step;
        let f_hi = hermite_orthonormal(n, hi, pim4).0;
        if f_lo.signum() != f_hi.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let fm = hermite_orthonormal(n, mid, pim4).0;
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            let mut z = 0.5 * (a + b);
            for _ in 0..2 {
                let (p1, p2) = hermite_orthonormal(n, z, pim4);
                let next = z - p1 / ((2.0 * nf).sqrt() * p2);
                if next > lo && next < hi {
                    z = next;
                }
            }
            roots.push(z);
        }
        lo = hi;
        f_lo = f_hi;
    }
    if roots.len() != m {
        return Err(Error::NumericalFailure(format!(
            "Gauss-Hermite root search found {} of {m} positive roots",
            roots.len()
        )));
    }
    let weight = |z: f64| {
        let (_, p2) = hermite_orthonormal(n, z, pim4);
        let pp = (2.0 * nf).sqrt() * p2;
        2.0 / (pp * pp)
    };
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, &z) in roots.iter().enumerate() {
        // Ascending order: negatives first.
        x[m - 1 - i] = -z;
        x[n - m + i] = z;
        w[m - 1 - i] = weight(z);
        w[n - m + i] = w[m - 1 - i];
    }
    if n % 2 == 1 {
        x[m] = 0.0;
        w[m] = weight(0.0);
    }
    Ok(QuadratureRule {
        nodes: x,
        weights: w,
        measure: MeasureTag::GaussHermite,
    })
}

/// Orthonormal Hermite values `(p_n(z), p_{n-1}(z))`.
fn hermite_orthonormal(n: usize, z: f64, p0: f64) -> (f64, f64) {
    let mut p1 = p0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// `n`-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_NODES {
        return Err(invalid(format!(
            "Gauss-Legendre order must be in 1..={MAX_NODES}, got {n}"
        )));
    }
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(invalid(format!("Gauss-Legendre interval [{a}, {b}] is empty")));
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let xm = 0.5 * (a + b);
    let xl = 0.5 * (b - a);
    for i in 1..=m {
        let mut z = (PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
        let mut pp;
        let mut iter = 0;
        loop {
            let (p1, p2) = legendre(n, z);
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            iter += 1;
            if (z - z1).abs() <= 1e-15 || iter >= NEWTON_MAX_ITER {
                break;
            }
        }
        let (p1, p2) = legendre(n, z);
        pp = nf * (z * p1 - p2) / (z * z - 1.0);
        x[i - 1] = xm - xl * z;
        x[n - i] = xm + xl * z;
        w[i - 1] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        w[n - i] = w[i - 1];
    }
    if n % 2 == 1 {
        x[m - 1] = xm;
    }
    Ok(QuadratureRule {
        nodes: x,
        weights: w,
        measure: MeasureTag::GaussLegendre { a, b },
    })
}

/// Legendre values `(P_n(z), P_{n-1}(z))`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
    }
    (p1, p2)
}

/// Nodes and probability weights for `ζ ~ N(0, γ²)`.
fn normal_rule(n: usize, sd: f64) -> Result<Vec<(f64, f64)>> {
    let rule = gauss_hermite(n)?;
    let norm = PI.sqrt().recip();
    Ok(rule
        .nodes()
        .iter()
        .zip(rule.weights())
        .map(|(&t, &w)| (std::f64::consts::SQRT_2 * sd * t, w * norm))
        .collect())
}

/// Nodes and probability weights for a bias law.
pub(crate) fn bias_rule(bias: &BiasDistribution, n: usize) -> Result<Vec<(f64, f64)>> {
    match *bias {
        BiasDistribution::Uniform { lo, hi } => {
            let rule = gauss_legendre(n, lo, hi)?;
            let inv = (hi - lo).recip();
            Ok(rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(&t, &w)| (t, w * inv))
                .collect())
        }
        BiasDistribution::Gaussian { sd } => normal_rule(n, sd),
        BiasDistribution::PointMass => Ok(vec![(0.0, 1.0)]),
    }
}

/// Value of a two-dimensional expectation and its doubling-ladder error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub error_estimate: f64,
    pub orders: (usize, usize),
}

/// Default tensor-product orders.
pub const DEFAULT_ORDERS: (usize, usize) = (64, 64);
/// Successive-order agreement that stops the doubling ladder.
pub const LADDER_TOLERANCE: f64 = 1e-8;

fn tensor_product<F>(f: &F, gamma: f64, bias: &BiasDistribution, orders: (usize, usize)) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let zeta = normal_rule(orders.0, gamma)?;
    let b = bias_rule(bias, orders.1)?;
    let mut total = 0.0;
    for &(z, wz) in &zeta {
        let inner: f64 = b.iter().map(|&(bv, wb)| wb * f(z, bv)).sum();
        total += wz * inner;
    }
    Ok(total)
}

/// `E[f(ζ, b)]` for `ζ ~ N(0, γ²)` independent of `b ~ bias`, by tensor-product
/// Gauss rules (Hermite in ζ, Legendre or Hermite in b).
pub fn expectation_2d<F>(f: F, gamma: f64, bias: &BiasDistribution, orders: (usize, usize)) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    expectation_2d_detailed(f, gamma, bias, orders).map(|e| e.value)
}

/// Like [`expectation_2d`], doubling both orders until two successive results
/// agree within [`LADDER_TOLERANCE`] or the order cap is hit.
pub fn expectation_2d_detailed<F>(
    f: F,
    gamma: f64,
    bias: &BiasDistribution,
    orders: (usize, usize),
) -> Result<Expectation>
where
    F: Fn(f64, f64) -> f64,
{
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    if orders.0 < 8 || orders.1 < 8 {
        return Err(invalid(format!("quadrature orders must be >= 8, got {orders:?}")));
    }
    bias.validate()?;
    let mut current = orders;
    let mut value = tensor_product(&f, gamma, bias, current)?;
    let mut error_estimate = f64::INFINITY;
    while current.0 < MAX_NODES || current.1 < MAX_NODES {
        let next = ((current.0 * 2).min(MAX_NODES), (current.1 * 2).min(MAX_NODES));
        let next_value = tensor_product(&f, gamma, bias, next)?;
        error_estimate = (next_value - value).abs();
        value = next_value;
        current = next;
        if error_estimate < LADDER_TOLERANCE {
            break;
        }
    }
    if !value.is_finite() {
        return Err(crate::Error::EvaluationFailure(
            "non-finite quadrature result".into(),
        ));
    }
    Ok(Expectation {
        value,
        error_estimate,
        orders: current,
    })
}

/// Number of standard deviations kept when a Gaussian is truncated for
/// piecewise integration. The discarded mass is below 1e-20.
pub const GAUSSIAN_TRUNCATION: f64 = 10.0;

/// Panel layout for [`PiecewiseExpectation`].
#[derive(Debug, Clone, Default)]
pub struct Panels {
    /// Extra ζ breakpoints (kinks or feature locations).
    pub zeta_breaks: Vec<f64>,
    /// Largest ζ panel width.
    pub zeta_max_width: f64,
    /// Largest b panel width.
    pub bias_max_width: f64,
}

/// Composite Gauss–Legendre evaluation of `E[f(ζ, b)]` over truncated laws,
/// with panels split at caller-supplied breakpoints.
///
/// This handles integrands that are only piecewise smooth (activation kinks)
/// or that vary on scales much shorter than the law itself, where a single
/// global Hermite rule converges slowly.
#[derive(Debug, Clone)]
pub struct PiecewiseExpectation {
    reference: QuadratureRule,
    gamma: f64,
    bias: BiasDistribution,
}

impl PiecewiseExpectation {
    pub fn new(gamma: f64, bias: BiasDistribution, panel_order: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        bias.validate()?;
        Ok(PiecewiseExpectation {
            reference: gauss_legendre(panel_order, -1.0, 1.0)?,
            gamma,
            bias,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn bias(&self) -> &BiasDistribution {
        &self.bias
    }

    pub fn panel_order(&self) -> usize {
        self.reference.len()
    }

    /// `bias_breaks(ζ, out)` pushes the b-locations where `f(ζ, ·)` is not smooth.
    pub fn expectation<F, B>(&self, f: F, panels: &Panels, bias_breaks: B) -> f64
    where
        F: Fn(f64, f64) -> f64,
        B: Fn(f64, &mut Vec<f64>),
    {
        let limit = GAUSSIAN_TRUNCATION * self.gamma;
        let zeta_width = if panels.zeta_max_width > 0.0 {
            panels.zeta_max_width
        } else {
            2.0 * self.gamma
        };
        let mut zeta_panels = Vec::new();
        panelize(-limit, limit, &panels.zeta_breaks, zeta_width, &mut zeta_panels);

        let norm = (self.gamma * (2.0 * PI).sqrt()).recip();
        let inv_two_var = 0.5 / (self.gamma * self.gamma);

        let mut breaks = Vec::new();
        let mut bias_panels = Vec::new();
        let mut total = 0.0;
        for &(lo, hi) in &zeta_panels {
            for (z, wz) in self.reference.mapped(lo, hi) {
                let density = norm * (-z * z * inv_two_var).exp();
                if density == 0.0 {
                    continue;
                }
                let inner = match self.bias {
                    BiasDistribution::PointMass => f(z, 0.0),
                    BiasDistribution::Uniform { lo: a, hi: b } => {
                        breaks.clear();
                        bias_breaks(z, &mut breaks);
                        bias_panels.clear();
                        panelize(a, b, &breaks, panels.bias_max_width, &mut bias_panels);
                        let inv = (b - a).recip();
                        let mut acc = 0.0;
                        for &(pl, ph) in &bias_panels {
                            for (bv, wb) in self.reference.mapped(pl, ph) {
                                acc += wb * f(z, bv);
                            }
                        }
                        acc * inv
                    }
                    BiasDistribution::Gaussian { sd } => {
                        breaks.clear();
                        bias_breaks(z, &mut breaks);
                        bias_panels.clear();
                        let blim = GAUSSIAN_TRUNCATION * sd;
                        let width = panels.bias_max_width.min(2.0 * sd);
                        panelize(-blim, blim, &breaks, width, &mut bias_panels);
                        let bnorm = (sd * (2.0 * PI).sqrt()).recip();
                        let binv = 0.5 / (sd * sd);
                        let mut acc = 0.0;
                        for &(pl, ph) in &bias_panels {
                            for (bv, wb) in self.reference.mapped(pl, ph) {
                                acc += wb * bnorm * (-bv * bv * binv).exp() * f(z, bv);
                            }
                        }
                        acc
                    }
                };
                total += wz * density * inner;
            }
        }
        total
    }
}

/// Splits `[lo, hi]` at the interior `breaks` and then into equal pieces no
/// wider than `max_width`.
pub(crate) fn panelize(lo: f64, hi: f64, breaks: &[f64], max_width: f64, out: &mut Vec<(f64, f64)>) {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&c| c.is_finite() && c > lo && c < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = b - a;
        let pieces = if max_width.is_finite() && max_width > 0.0 {
            (len / max_width).ceil().max(1.0) as usize
        } else {
            1
        };
        let step = len / pieces as f64;
        for k in 0..pieces {
            let pa = a + step * k as f64;
            let pb = if k + 1 == pieces { b } else { a + step * (k + 1) as f64 };
            out.push((pa, pb));
        }
    }
}
