//! Python bindings for `featlip`.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use featlip::analytic::{self, default_r_domain, DEFAULT_ORDER, DEFAULT_R_TOL};
use featlip::experiments::{self, KernelSpec, QuantileSweepConfig};
use featlip::features::{self, default_grid_1d, grid_from_scalars};
use featlip::kernels::{Activation, BiasDistribution, ShiftInvariantKernel, SigmaSpec};
use featlip::Error;

create_exception!(featlip_py, HypothesisViolation, PyValueError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::HypothesisViolation(_) => HypothesisViolation::new_err(msg),
        Error::NumericalFailure(_) | Error::EvaluationFailure(_) => PyArithmeticError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Lipschitz constant with the route that produced it.
#[pyclass(get_all, frozen)]
struct LipschitzReport {
    value: f64,
    argmax_r: Option<f64>,
    method: String,
    error_estimate: f64,
}

#[pymethods]
impl LipschitzReport {
    fn __repr__(&self) -> String {
        format!(
            "LipschitzReport(value={}, argmax_r={:?}, method='{}', error_estimate={:e})",
            self.value, self.argmax_r, self.method, self.error_estimate
        )
    }
}

impl From<analytic::LipschitzReport> for LipschitzReport {
    fn from(r: analytic::LipschitzReport) -> Self {
        LipschitzReport { value: r.value, argmax_r: r.argmax_r, method: r.method.to_string(), error_estimate: r.error_estimate }
    }
}

fn default_bias(act: Activation) -> BiasDistribution {
    match act {
        Activation::ScaledCos { .. } => BiasDistribution::uniform_phase(),
        _ => BiasDistribution::Gaussian { sd: 1.0 },
    }
}

fn shift_kernel(kernel: &str, dim: Option<usize>, nu: f64, sigma: &str) -> PyResult<ShiftInvariantKernel> {
    let k = match kernel {
        "laplace" => ShiftInvariantKernel::laplace(dim.unwrap_or(1)),
        "gaussian" => ShiftInvariantKernel::gaussian(parse::<SigmaSpec>(sigma)?.resolve(dim).map_err(to_py)?),
        "matern" => ShiftInvariantKernel::matern(nu, parse::<SigmaSpec>(sigma)?.resolve(dim).map_err(to_py)?),
        other => return Err(PyValueError::new_err(format!("unknown kernel '{other}'"))),
    };
    k.map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
fn kernel_spec(
    activation: Option<&str>,
    kernel: Option<&str>,
    gamma: f64,
    bias: Option<&str>,
    dim: Option<usize>,
    nu: f64,
    sigma: &str,
) -> PyResult<KernelSpec> {
    match (activation, kernel) {
        (Some(_), Some(_)) => Err(PyValueError::new_err("give either activation or kernel, not both")),
        (_, Some(k)) => Ok(KernelSpec::ShiftInvariant(shift_kernel(k, dim, nu, sigma)?)),
        (a, None) => {
            let act: Activation = parse(a.unwrap_or("cos"))?;
            let bias = bias.map(parse).transpose()?.unwrap_or_else(|| default_bias(act));
            Ok(KernelSpec::Network { act, gamma, bias, dim: dim.unwrap_or(1) })
        }
    }
}

/// Exact constant of the infinitely wide network `σ(wᵀx + b)`, `w ~ N(0, γ²I)`.
#[pyfunction]
#[pyo3(signature = (activation, gamma, bias=None, r_min=None, r_max=None, tol=DEFAULT_R_TOL, order=DEFAULT_ORDER))]
fn rnn_lipschitz(
    activation: &str,
    gamma: f64,
    bias: Option<&str>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    tol: f64,
    order: usize,
) -> PyResult<LipschitzReport> {
    let act: Activation = parse(activation)?;
    let bias = bias.map(parse).transpose()?.unwrap_or_else(|| default_bias(act));
    let (lo, hi) = default_r_domain(gamma, &bias);
    analytic::rnn_lipschitz_with_order(act, gamma, &bias, (r_min.unwrap_or(lo), r_max.unwrap_or(hi)), tol, order)
        .map(Into::into)
        .map_err(to_py)
}

/// Curvature profile `E[ζ²σ′(ζr + b)²]`, `ζ ~ N(0, γ²)`.
#[pyfunction]
fn nu_function(activation: &str, gamma: f64, bias: &str, r: f64) -> PyResult<f64> {
    analytic::nu_function(parse(activation)?, gamma, &parse(bias)?, r).map_err(to_py)
}

/// Exact constant of a stationary kernel; `inf` when it diverges.
#[pyfunction]
#[pyo3(signature = (kernel, dim=None, nu=2.0, sigma="identity"))]
fn shift_invariant_lipschitz(kernel: &str, dim: Option<usize>, nu: f64, sigma: &str) -> PyResult<LipschitzReport> {
    analytic::shift_invariant_lipschitz(&shift_kernel(kernel, dim, nu, sigma)?).map(Into::into).map_err(to_py)
}

/// Partial sums of the derivative series of the Brownian-motion kernel.
#[pyfunction]
fn wiener_divergence(m: u64) -> PyResult<f64> {
    analytic::wiener_divergence(m).map_err(to_py)
}

/// A finite random feature map.
#[pyclass]
struct FeatureMap {
    inner: features::RandomFeatureMap,
}

#[pymethods]
impl FeatureMap {
    /// Draws `n` features of a network (`activation`) or of a stationary
    /// kernel's random Fourier features (`kernel`).
    #[new]
    #[pyo3(signature = (n, seed=0, activation=None, kernel=None, gamma=1.0, bias=None, dim=None, nu=2.0, sigma="identity"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        seed: u64,
        activation: Option<&str>,
        kernel: Option<&str>,
        gamma: f64,
        bias: Option<&str>,
        dim: Option<usize>,
        nu: f64,
        sigma: &str,
    ) -> PyResult<Self> {
        let spec = kernel_spec(activation, kernel, gamma, bias, dim, nu, sigma)?;
        let (w, b, act) = spec.feature_law().map_err(to_py)?;
        let inner = features::build_feature_map(&w, &b, act, n, seed).map_err(to_py)?;
        Ok(FeatureMap { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(FeatureMap { inner: features::RandomFeatureMap::load(Path::new(path)).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(to_py)
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&x).map_err(to_py)
    }

    fn kernel(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.empirical_kernel(&x, &y).map_err(to_py)
    }

    fn jacobian_norm(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.jacobian_norm(&x).map_err(to_py)
    }

    /// `(max Jacobian norm, index of the maximizing point)` over `grid`;
    /// the default grid is the one-dimensional `[-1, 1]` grid.
    #[pyo3(signature = (grid=None))]
    fn empirical_lipschitz(&self, grid: Option<Vec<Vec<f64>>>) -> PyResult<(f64, usize)> {
        let grid = grid.unwrap_or_else(|| grid_from_scalars(&default_grid_1d()));
        self.inner.empirical_lipschitz(&grid).map_err(to_py)
    }
}

/// `(N, t_hat, quantile_index, lip_hat_mean, lip_hat_sd)`.
type SweepTuple = (usize, f64, usize, f64, f64);

/// Quantile sweep; returns `(N, t_hat, quantile_index, lip_hat_mean, lip_hat_sd)` rows.
#[pyfunction]
#[pyo3(signature = (
    n_list, realizations=300, delta=0.9, seed=0, nested=false, threads=None,
    activation=None, kernel=None, gamma=1.0, bias=None, nu=2.0
))]
#[allow(clippy::too_many_arguments)]
fn quantile_sweep(
    py: Python<'_>,
    n_list: Vec<usize>,
    realizations: usize,
    delta: f64,
    seed: u64,
    nested: bool,
    threads: Option<usize>,
    activation: Option<&str>,
    kernel: Option<&str>,
    gamma: f64,
    bias: Option<&str>,
    nu: f64,
) -> PyResult<Vec<SweepTuple>> {
    let spec = kernel_spec(activation, kernel, gamma, bias, Some(1), nu, "identity")?;
    let lip_reference = spec.lipschitz_reference().map_err(to_py)?;
    if !lip_reference.is_finite() {
        return Err(PyValueError::new_err("the limiting feature map is not Lipschitz"));
    }
    let cfg = QuantileSweepConfig {
        spec,
        n_list,
        realizations,
        delta,
        grid: grid_from_scalars(&default_grid_1d()),
        seed,
        lip_reference: lip_reference.value,
        nested,
    };
    let rows = py
        .detach(|| experiments::with_threads(threads, || experiments::quantile_sweep(&cfg)))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.n, r.t_hat, r.quantile_index, r.lip_hat_mean, r.lip_hat_sd)).collect())
}

#[pymodule]
fn featlip_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HypothesisViolation", m.py().get_type::<HypothesisViolation>())?;
    m.add_class::<LipschitzReport>()?;
    m.add_class::<FeatureMap>()?;
    m.add_function(wrap_pyfunction!(rnn_lipschitz, m)?)?;
    m.add_function(wrap_pyfunction!(nu_function, m)?)?;
    m.add_function(wrap_pyfunction!(shift_invariant_lipschitz, m)?)?;
    m.add_function(wrap_pyfunction!(wiener_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_sweep, m)?)?;
    Ok(())
}
