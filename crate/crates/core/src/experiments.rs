//! Monte-Carlo studies of finite random feature maps: the quantile sweep of
//! `Lip(θ_N) − Lip(φ_k)` and the uniform kernel-approximation error.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use crate::analytic::{
    default_r_domain, rnn_lipschitz_with_order, shift_invariant_lipschitz, LipschitzReport, DEFAULT_ORDER,
    DEFAULT_R_TOL,
};
use crate::error::{invalid, Error, Result};
use crate::features::{build_feature_map_from_stream, RandomFeatureMap};
use crate::kernels::{Activation, BiasDistribution, ShiftInvariantKernel, WeightDistribution};
use crate::rng::StreamKey;

/// Header of the quantile-sweep CSV.
pub const SWEEP_CSV_HEADER: &str = "N,t_hat,quantile_index,lip_hat_mean,lip_hat_sd";
/// Header of the kernel-convergence CSV.
pub const CONVERGENCE_CSV_HEADER: &str = "N,sup_error";

/// Which integral kernel the features approximate.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// One-layer network `σ(wᵀx + b)` with `w ~ N(0, γ²I_d)`.
    Network { act: Activation, gamma: f64, bias: BiasDistribution, dim: usize },
    /// Random Fourier features `√(2κ(0)) cos(wᵀx + b)` of a stationary kernel,
    /// `w` from its spectral law and `b ~ Uniform[0, 2π]`.
    ShiftInvariant(ShiftInvariantKernel),
}

impl KernelSpec {
    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::Network { dim, .. } => *dim,
            KernelSpec::ShiftInvariant(k) => k.dim(),
        }
    }

    /// `(weight law, bias law, activation)` of one feature.
    pub fn feature_law(&self) -> Result<(WeightDistribution, BiasDistribution, Activation)> {
        match self {
            KernelSpec::Network { act, gamma, bias, dim } => {
                Ok((WeightDistribution::isotropic_gaussian(*gamma, *dim)?, *bias, *act))
            }
            KernelSpec::ShiftInvariant(k) => Ok((
                k.spectral().clone(),
                BiasDistribution::uniform_phase(),
                Activation::scaled_cos(k.kappa0())?,
            )),
        }
    }

    /// Exact Lipschitz constant of the limiting feature map.
    pub fn lipschitz_reference(&self) -> Result<LipschitzReport> {
        match self {
            KernelSpec::Network { act, gamma, bias, .. } => rnn_lipschitz_with_order(
                *act,
                *gamma,
                bias,
                default_r_domain(*gamma, bias),
                DEFAULT_R_TOL,
                DEFAULT_ORDER,
            ),
            KernelSpec::ShiftInvariant(k) => shift_invariant_lipschitz(k),
        }
    }

    /// Closed-form `k(x, y)` when one is available.
    pub fn closed_form_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            KernelSpec::ShiftInvariant(k) => k.eval(x, y),
            KernelSpec::Network { act: Activation::ScaledCos { kappa0 }, gamma, bias, .. }
                if is_full_phase(bias) =>
            {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok(kappa0 * (-0.5 * gamma * gamma * d2).exp())
            }
            KernelSpec::Network { act, bias, .. } => Err(Error::Unsupported(format!(
                "no closed-form kernel for activation '{act}' with bias '{bias}'"
            ))),
        }
    }
}

fn is_full_phase(bias: &BiasDistribution) -> bool {
    match *bias {
        BiasDistribution::Uniform { lo, hi } => ((hi - lo) - std::f64::consts::TAU).abs() < 1e-12,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSweepConfig {
    pub spec: KernelSpec,
    /// Feature counts, strictly increasing.
    pub n_list: Vec<usize>,
    /// Number of independent feature maps per `N`.
    pub realizations: usize,
    /// Quantile level in `(0, 1)`.
    pub delta: f64,
    pub grid: Vec<Vec<f64>>,
    pub seed: u64,
    /// Exact `Lip(φ_k)`; must be finite.
    pub lip_reference: f64,
    /// Realization `i` reuses one stream across all `N`, so smaller maps are
    /// prefixes of larger ones.
    pub nested: bool,
}

/// Default feature counts `2⁴, …, 2¹²`.
pub fn default_n_list() -> Vec<usize> {
    (4..=12).map(|p| 1usize << p).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    /// Signed `(⌈δI⌉-th order statistic of Lip̂) − lip_reference`.
    pub t_hat: f64,
    pub quantile_index: usize,
    pub lip_hat_mean: f64,
    pub lip_hat_sd: f64,
}

/// `⌈δI⌉`, robust to `δI` landing a rounding error above an integer.
pub fn quantile_index(delta: f64, realizations: usize) -> usize {
    let i = realizations as f64;
    let k = (delta * i - 1e-12 * i).ceil();
    (k.max(1.0) as usize).min(realizations)
}

impl QuantileSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list[0] == 0 {
            return Err(Error::InvalidConfiguration("N list must be non-empty with N >= 1".into()));
        }
        if self.n_list.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidConfiguration("N list must be strictly increasing".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfiguration("need at least one realization".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfiguration(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !self.lip_reference.is_finite() {
            return Err(Error::InvalidConfiguration(
                "the reference Lipschitz constant is infinite; the feature map is not Lipschitz".into(),
            ));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidConfiguration("grid must contain at least one point".into()));
        }
        let d = self.spec.dim();
        if self.grid.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidConfiguration(format!("grid points must have dimension {d}")));
        }
        Ok(())
    }

    fn realization_stream(&self, n: usize, i: usize) -> StreamKey {
        let root = StreamKey::from_seed(self.seed);
        if self.nested {
            root.derive(i as u64)
        } else {
            root.derive2(n as u64, i as u64)
        }
    }

    /// Feature map of realization `i` at width `n`.
    pub fn realization(&self, n: usize, i: usize) -> Result<RandomFeatureMap> {
        let (dist, bias, act) = self.spec.feature_law()?;
        build_feature_map_from_stream(&dist, &bias, act, n, self.realization_stream(n, i))
    }
}

/// Runs the sweep; rows come out in `N` order.
pub fn quantile_sweep(cfg: &QuantileSweepConfig) -> Result<Vec<SweepRow>> {
    quantile_sweep_with_progress(cfg, |_| Ok(()))
}

/// Like [`quantile_sweep`], calling `on_row` after each completed `N`.
pub fn quantile_sweep_with_progress<F>(cfg: &QuantileSweepConfig, mut on_row: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SweepRow) -> Result<()>,
{
    cfg.validate()?;
    let (dist, bias, act) = cfg.spec.feature_law()?;
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        // Indexed collection: the table is filled by realization index,
        // independent of worker scheduling.
        let values: Vec<f64> = (0..cfg.realizations)
            .into_par_iter()
            .map(|i| {
                let fm = build_feature_map_from_stream(&dist, &bias, act, n, cfg.realization_stream(n, i))?;
                fm.empirical_lipschitz(&cfg.grid).map(|(v, _)| v)
            })
            .collect::<Result<_>>()?;
        let row = summarize(n, &values, cfg.delta, cfg.lip_reference);
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

fn summarize(n: usize, values: &[f64], delta: f64, lip_reference: f64) -> SweepRow {
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let sd = if count > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = quantile_index(delta, count);
    SweepRow { n, t_hat: sorted[q - 1] - lip_reference, quantile_index: q, lip_hat_mean: mean, lip_hat_sd: sd }
}

/// Rows whose mean estimate exceeds the reference by more than five standard
/// deviations. Such rows are suspicious but not errors.
pub fn concentration_warnings(rows: &[SweepRow], lip_reference: f64) -> Vec<String> {
    rows.iter()
        .filter(|r| r.lip_hat_mean > lip_reference + 5.0 * r.lip_hat_sd)
        .map(|r| {
            format!(
                "N={}: mean estimate {} exceeds reference {} by more than 5 sd ({})",
                r.n, r.lip_hat_mean, lip_reference, r.lip_hat_sd
            )
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers (`None` uses the global pool).
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    F: FnOnce() -> Result<T> + Send,
    T: Send,
{
    match threads {
        None => f(),
        Some(0) => Err(invalid("thread count must be at least 1")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfiguration(format!("cannot build a pool of {k} threads: {e}")))?
            .install(f),
    }
}

/// `sup_{x, y ∈ points} |k_N(x, y) − k(x, y)|` for each `N`, all widths taken
/// as prefixes of one draw of `max(N)` features.
pub fn kernel_convergence_sweep(
    spec: &KernelSpec,
    n_list: &[usize],
    points: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidConfiguration("N list must be non-empty, positive and strictly increasing".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidConfiguration("need at least one point".into()));
    }
    let d = spec.dim();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidConfiguration(format!("points must have dimension {d}")));
    }
    let exact: Vec<Vec<f64>> = points
        .iter()
        .map(|x| points.iter().map(|y| spec.closed_form_kernel(x, y)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let (dist, bias, act) = spec.feature_law()?;
    let n_max = *n_list.last().unwrap_or(&1);
    let fm = build_feature_map_from_stream(&dist, &bias, act, n_max, StreamKey::from_seed(seed))?;
    // Unscaled feature values, one row per point.
    let feats: Vec<Vec<f64>> = points
        .iter()
        .map(|x| fm.evaluate(x).map(|v| v.into_iter().map(|t| t * (n_max as f64).sqrt()).collect()))
        .collect::<Result<_>>()?;
    let p = points.len();
    let mut partial = vec![0.0; p * p];
    let mut done = 0;
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        for a in 0..p {
            for b in 0..p {
                let (fa, fb) = (&feats[a], &feats[b]);
                partial[a * p + b] += (done..n).map(|i| fa[i] * fb[i]).sum::<f64>();
            }
        }
        done = n;
        let mut sup = 0.0f64;
        for a in 0..p {
            for b in 0..p {
                sup = sup.max((partial[a * p + b] / n as f64 - exact[a][b]).abs());
            }
        }
        out.push((n, sup));
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("need at least two (x, y) pairs"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("x values are all equal"));
    }
    Ok(sxy / sxx)
}

/// Float formatting that round-trips exactly (17 significant digits).
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.n,
            fmt_float(r.t_hat),
            r.quantile_index,
            fmt_float(r.lip_hat_mean),
            fmt_float(r.lip_hat_sd)
        );
    }
    s
}

fn empty_rows_error() -> Error {
    Error::Io(io::Error::new(io::ErrorKind::InvalidInput, "refusing to write a CSV with no data rows"))
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(empty_rows_error());
    }
    std::fs::write(path, format_sweep_csv(rows))?;
    Ok(())
}

fn csv_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| invalid(format!("malformed CSV field on line {line}")))
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_CSV_HEADER) {
        return Err(invalid("unexpected sweep CSV header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let mut f = l.split(',');
            Ok(SweepRow {
                n: csv_field(f.next(), k + 2)?,
                t_hat: csv_field(f.next(), k + 2)?,
                quantile_index: csv_field(f.next(), k + 2)?,
                lip_hat_mean: csv_field(f.next(), k + 2)?,
                lip_hat_sd: csv_field(f.next(), k + 2)?,
            })
        })
        .collect()
}

pub fn format_convergence_csv(rows: &[(usize, f64)]) -> String {
    let mut s = String::from(CONVERGENCE_CSV_HEADER);
    s.push('\n');
    for (n, e) in rows {
        let _ = writeln!(s, "{n},{}", fmt_float(*e));
    }
    s
}

pub fn write_convergence_csv(rows: &[(usize, f64)], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(empty_rows_error());
    }
    std::fs::write(path, format_convergence_csv(rows))?;
    Ok(())
}

/// One JSON object per completed `N`.
pub fn log_row<W: Write>(out: &mut W, row: &SweepRow) -> Result<()> {
    let obj = json!({
        "event": "sweep_row",
        "N": row.n,
        "t_hat": row.t_hat,
        "quantile_index": row.quantile_index,
        "lip_hat_mean": row.lip_hat_mean,
        "lip_hat_sd": row.lip_hat_sd,
    });
    writeln!(out, "{obj}")?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{default_grid_1d, grid_from_scalars};

    fn rff_spec() -> KernelSpec {
        KernelSpec::Network {
            act: Activation::cosine(),
            gamma: 1.0,
            bias: BiasDistribution::uniform_phase(),
            dim: 1,
        }
    }

    fn small_config(realizations: usize, delta: f64, seed: u64) -> QuantileSweepConfig {
        QuantileSweepConfig {
            spec: rff_spec(),
            n_list: vec![8, 32],
            realizations,
            delta,
            grid: grid_from_scalars(&default_grid_1d()),
            seed,
            lip_reference: 1.0,
            nested: false,
        }
    }

    #[test]
    fn single_realization_quantile() {
        let cfg = small_config(1, 0.9, 3);
        let rows = quantile_sweep(&cfg).unwrap();
        for row in rows {
            let lip = cfg.realization(row.n, 0).unwrap().empirical_lipschitz(&cfg.grid).unwrap().0;
            assert_eq!(row.quantile_index, 1);
            assert_eq!(row.t_hat, lip - 1.0);
            assert_eq!(row.lip_hat_sd, 0.0);
        }
    }

    #[test]
    fn quantile_matches_sorted_oracle() {
        let mut rng = StreamKey::from_seed(77).rng();
        for case in 0..50 {
            let realizations = 1 + (rng.uniform() * 20.0) as usize;
            let percent = 1 + (rng.uniform() * 98.0) as usize;
            let delta = percent as f64 / 100.0;
            let mut cfg = small_config(realizations, delta, case);
            cfg.n_list = vec![4];
            let row = quantile_sweep(&cfg).unwrap()[0];
            let mut all: Vec<f64> = (0..realizations)
                .map(|i| cfg.realization(4, i).unwrap().empirical_lipschitz(&cfg.grid).unwrap().0)
                .collect();
            all.sort_by(f64::total_cmp);
            // ⌈p·I/100⌉ in exact integer arithmetic.
            let k = (percent * realizations).div_ceil(100);
            assert_eq!(row.quantile_index, k, "case {case}");
            assert_eq!(row.t_hat, all[k - 1] - 1.0, "case {case}");
        }
    }

    #[test]
    fn quantile_index_guard() {
        assert_eq!(quantile_index(0.9, 300), 270);
        assert_eq!(quantile_index(0.9, 3000), 2700);
        assert_eq!(quantile_index(0.7, 10), 7);
        assert_eq!(quantile_index(0.01, 10), 1);
        assert_eq!(quantile_index(0.95, 21), 20);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let cfg = small_config(40, 0.9, 12);
        let one = with_threads(Some(1), || quantile_sweep(&cfg)).unwrap();
        let three = with_threads(Some(3), || quantile_sweep(&cfg)).unwrap();
        assert_eq!(format_sweep_csv(&one), format_sweep_csv(&three));
    }

    #[test]
    fn nested_realizations_are_prefixes() {
        let mut cfg = small_config(3, 0.5, 9);
        cfg.nested = true;
        let small = cfg.realization(8, 2).unwrap();
        let big = cfg.realization(32, 2).unwrap();
        assert_eq!(small.weights().as_slice(), &big.weights().as_slice()[..8]);
        assert_eq!(small.biases(), &big.biases()[..8]);
        cfg.nested = false;
        assert_ne!(cfg.realization(8, 2).unwrap().biases(), &big.biases()[..8]);
    }

    #[test]
    fn invalid_configurations() {
        let mut cfg = small_config(10, 0.9, 0);
        cfg.lip_reference = f64::INFINITY;
        assert!(matches!(quantile_sweep(&cfg), Err(Error::InvalidConfiguration(_))));
        let mut cfg = small_config(10, 1.0, 0);
        assert!(quantile_sweep(&cfg).is_err());
        cfg.delta = 0.5;
        cfg.n_list = vec![16, 16];
        assert!(quantile_sweep(&cfg).is_err());
        cfg.n_list = vec![16];
        cfg.grid = vec![vec![0.0, 1.0]];
        assert!(quantile_sweep(&cfg).is_err());
    }

    #[test]
    fn csv_round_trip_and_shape() {
        let rows = vec![SweepRow {
            n: 16,
            t_hat: -0.123_456_789_012_345_67,
            quantile_index: 270,
            lip_hat_mean: 1.0 / 3.0,
            lip_hat_sd: 2e-17,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(parse_sweep_csv(&text).unwrap(), rows);

        let err = write_sweep_csv(&[], &path).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
        assert_eq!(err.exit_code(), 3);
        assert!(write_sweep_csv(&rows, &dir.path().join("missing/dir.csv")).is_err());
    }

    proptest::proptest! {
        #[test]
        fn float_format_is_lossless(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            proptest::prop_assert_eq!(fmt_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn kernel_convergence_prefix_contract() {
        let points = grid_from_scalars(&[-1.0, 0.0, 0.5]);
        let a = kernel_convergence_sweep(&rff_spec(), &[16, 64], &points, 4).unwrap();
        let b = kernel_convergence_sweep(&rff_spec(), &[16, 64, 256], &points, 4).unwrap();
        assert_eq!(&a[..], &b[..2]);
        let relu = KernelSpec::Network { act: Activation::Relu, gamma: 1.0, bias: BiasDistribution::PointMass, dim: 1 };
        assert!(matches!(kernel_convergence_sweep(&relu, &[4], &points, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn kernel_convergence_large_n() {
        let points: Vec<Vec<f64>> = (0..10).map(|k| vec![-1.0 + 2.0 * k as f64 / 9.0]).collect();
        let rows = kernel_convergence_sweep(&rff_spec(), &[1 << 16], &points, 1).unwrap();
        assert!(rows[0].1 < 0.02, "{}", rows[0].1);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn log_lines_are_json() {
        let mut buf = Vec::new();
        let row = SweepRow { n: 4, t_hat: 0.5, quantile_index: 1, lip_hat_mean: 1.5, lip_hat_sd: 0.0 };
        log_row(&mut buf, &row).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["N"], 4);
        assert_eq!(v["t_hat"], 0.5);
    }

    #[test]
    fn matern_spec_uses_student_weights() {
        let spec = KernelSpec::ShiftInvariant(
            ShiftInvariantKernel::matern(2.0, crate::numerics::Matrix::identity(1)).unwrap(),
        );
        let (dist, bias, act) = spec.feature_law().unwrap();
        assert_eq!(dist.family_name(), "student-t");
        assert_eq!(bias, BiasDistribution::uniform_phase());
        assert_eq!(act, Activation::cosine());
        assert!((spec.lipschitz_reference().unwrap().value - 2f64.sqrt()).abs() < 1e-12);
    }
}
