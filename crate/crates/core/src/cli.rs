//! Command-line front end.
//!
//! Settings come from flags, an optional flat `key = value` file
//! (`--config`), and built-in defaults, in that order of precedence.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, ValueEnum};

use crate::analytic::{
    default_r_domain, diagonal_curvature_oracle, feature_upper_bound, hessian_lipschitz_oracle,
    rnn_lipschitz_with_order, shift_invariant_lipschitz, LipschitzReport, Method, DEFAULT_ORDER, DEFAULT_R_TOL,
};
use crate::error::{invalid, Error, Result};
use crate::experiments::{
    concentration_warnings, default_n_list, fmt_float, format_convergence_csv, format_sweep_csv,
    kernel_convergence_sweep, log_row, loglog_slope, quantile_sweep_with_progress, with_threads, KernelSpec,
    QuantileSweepConfig,
};
use crate::features::{build_feature_map, default_grid_1d, grid_from_scalars, lattice_grid, RandomFeatureMap};
use crate::kernels::{Activation, BiasDistribution, ShiftInvariantKernel, SigmaSpec, WeightDistribution};
use crate::numerics::DEFAULT_HESSIAN_STEP;
use crate::plot::{line_chart_log_x, Series};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandName {
    /// Exact constant of an infinitely wide one-layer network.
    Analytic,
    /// Exact constant of a stationary kernel (finite or +inf).
    ShiftInvariant,
    /// Grid estimate of Lip(θ_N) for one random feature map.
    Empirical,
    /// Quantile of Lip(θ_N) − Lip(φ_k) across many feature maps, per N.
    QuantileSweep,
    /// sup |k_N − k| over a point grid, per N, on nested feature sets.
    KernelConvergence,
    /// Independent routes to the same constant, side by side.
    Crosscheck,
}

/// Stationary kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelName {
    Gaussian,
    Matern,
    Laplace,
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(KernelName::Gaussian),
            "matern" => Ok(KernelName::Matern),
            "laplace" => Ok(KernelName::Laplace),
            other => Err(invalid(format!("unknown kernel '{other}' (expected gaussian, matern, laplace)"))),
        }
    }
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelName::Gaussian => "gaussian",
            KernelName::Matern => "matern",
            KernelName::Laplace => "laplace",
        })
    }
}

/// Comma-separated feature counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NList(pub Vec<usize>);

impl FromStr for NList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| invalid(format!("bad feature count '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(NList(v))
    }
}

impl fmt::Display for NList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Evaluation grid: `default`, `linspace:LO:HI:COUNT` (one-dimensional), or
/// `lattice:LO:HI:K` (K points per axis on the cube `[LO, HI]^d`).
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Default,
    Linspace { lo: f64, hi: f64, count: usize },
    Lattice { lo: f64, hi: f64, per_axis: usize },
}

impl GridSpec {
    pub fn resolve(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        match *self {
            GridSpec::Default if dim == 1 => Ok(grid_from_scalars(&default_grid_1d())),
            GridSpec::Default => {
                let mut k = 1usize;
                while (k + 1).checked_pow(dim as u32).is_some_and(|t| t <= crate::features::MAX_GRID_POINTS) && k < 99 {
                    k += 1;
                }
                lattice_grid(&vec![-1.0; dim], &vec![1.0; dim], k)
            }
            GridSpec::Linspace { lo, hi, count } => {
                if dim != 1 {
                    return Err(invalid("linspace grids are one-dimensional; use lattice:LO:HI:K"));
                }
                lattice_grid(&[lo], &[hi], count)
            }
            GridSpec::Lattice { lo, hi, per_axis } => lattice_grid(&vec![lo; dim], &vec![hi; dim], per_axis),
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| invalid(format!("bad grid bound '{t}'")));
        let count = |t: &str| t.parse::<usize>().map_err(|_| invalid(format!("bad grid count '{t}'")));
        match parts.as_slice() {
            ["default"] => Ok(GridSpec::Default),
            ["linspace", a, b, n] => Ok(GridSpec::Linspace { lo: num(a)?, hi: num(b)?, count: count(n)? }),
            ["lattice", a, b, n] => Ok(GridSpec::Lattice { lo: num(a)?, hi: num(b)?, per_axis: count(n)? }),
            _ => Err(invalid(format!("unknown grid '{s}' (expected default, linspace:LO:HI:N, lattice:LO:HI:K)"))),
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Default => f.write_str("default"),
            GridSpec::Linspace { lo, hi, count } => write!(f, "linspace:{lo}:{hi}:{count}"),
            GridSpec::Lattice { lo, hi, per_axis } => write!(f, "lattice:{lo}:{hi}:{per_axis}"),
        }
    }
}

macro_rules! options {
    ($($(#[doc = $doc:literal])* $field:ident: $ty:ty = $key:literal;)*) => {
        /// Every setting a command can read. Unset fields fall back to the
        /// default stated in each help line.
        #[derive(Args, Debug, Clone, Default, PartialEq)]
        pub struct Options {
            $(
                $(#[doc = $doc])*
                #[arg(long = $key)]
                pub $field: Option<$ty>,
            )*
        }

        impl Options {
            /// Keys accepted on the command line and in config files.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Fields of `self`, falling back to `lower` where unset.
            pub fn overlay(self, lower: Options) -> Options {
                Options { $($field: self.$field.or(lower.$field),)* }
            }

            /// `(key, value)` for each set field.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key, v.to_string()));
                    }
                )*
                out
            }
        }
    };
}

options! {
    /// Activation: identity, relu, tanh, cos, cos:KAPPA0 [default: cos]
    activation: Activation = "activation";
    /// Stationary kernel: gaussian, matern, laplace [default: gaussian]
    kernel: KernelName = "kernel";
    /// Weight scale γ of network features, w ~ N(0, γ²I) [default: 1]
    gamma: f64 = "gamma";
    /// Bias law: uniform:A:B, gaussian:SD, point:0 [default: uniform:0:2π for cos, gaussian:1 otherwise]
    bias: BiasDistribution = "bias";
    /// Input dimension [default: 1, or the size of --sigma]
    dim: usize = "dim";
    /// Matérn smoothness ν [default: 2]
    nu: f64 = "nu";
    /// Kernel matrix Σ: identity, diag:A,B,..., file:PATH [default: identity]
    sigma: SigmaSpec = "sigma";
    /// Quadrature order, 8..=256 [default: 64]
    orders: usize = "orders";
    /// Tolerance of the search over r = ‖x‖ [default: 1e-6]
    tol: f64 = "tol";
    /// Lower end of the r search domain [default: 0]
    r_min: f64 = "r-min";
    /// Upper end of the r search domain [default: 10·γ·(1 + sd of the bias)]
    r_max: f64 = "r-max";
    /// Finite-difference step [default: 1e-4]
    h: f64 = "h";
    /// Master seed of every random draw [default: 0]
    seed: u64 = "seed";
    /// Number of features of a single map [default: 1024]
    features: usize = "features";
    /// Feature counts, comma separated [default: 16,32,...,4096]
    n_list: NList = "n-list";
    /// Feature maps per N in the quantile sweep [default: 3000]
    realizations: usize = "realizations";
    /// Quantile level δ in (0, 1) [default: 0.9]
    delta: f64 = "delta";
    /// Evaluation grid: default, linspace:LO:HI:N, lattice:LO:HI:K [default: default]
    grid: GridSpec = "grid";
    /// Reuse one stream per realization across N [default: false]
    nested: bool = "nested";
    /// Points per axis for the kernel-convergence grid on [-1, 1]^d [default: 10]
    points: usize = "points";
    /// Random (x, z) pairs for the curvature oracle [default: 20]
    checks: usize = "checks";
    /// Worker threads; results do not depend on it [default: all cores]
    threads: usize = "threads";
    /// CSV output path [default: standard output]
    output: String = "output";
    /// SVG chart path (quantile-sweep, kernel-convergence)
    svg: String = "svg";
    /// JSON-lines progress log path (quantile-sweep)
    log: String = "log";
    /// Save the feature map in the binary layout (empirical)
    save_map: String = "save-map";
    /// Load a saved feature map instead of drawing one (empirical)
    load_map: String = "load-map";
}

#[derive(Parser, Debug)]
#[command(
    name = "featlip",
    version,
    about = "Lipschitz constants of kernel feature maps and random-feature experiments",
    arg_required_else_help = true,
    args_override_self = true
)]
struct Cli {
    #[arg(value_enum)]
    command: CommandName,
    /// Flat `key = value` settings file; flags take precedence
    #[arg(long)]
    config: Option<String>,
    /// Print the effective settings in config-file form and exit
    #[arg(long)]
    dump_config: bool,
    #[command(flatten)]
    options: Options,
}

/// Fully merged settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandName,
    pub options: Options,
}

/// Outcome of argument parsing.
#[derive(Debug)]
pub enum Parsed {
    Run(RunConfig),
    DumpConfig(RunConfig),
    /// Help or version text; exit 0.
    Display(String),
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected 'key = value', got '{line}'", no + 1)))?;
        let key = normalize_key(key);
        if !Options::KEYS.contains(&key.as_str()) {
            return Err(Error::Usage(format!("config line {}: unknown key '{key}'", no + 1)));
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(Error::Usage(format!("config line {}: duplicate key '{key}'", no + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn clap_error(e: clap::Error) -> Result<Parsed> {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Parsed::Display(e.render().to_string())),
        _ => Err(Error::Usage(e.render().to_string())),
    }
}

/// Parses `argv` (including the program name) and an optional config file.
pub fn parse_config(argv: &[String]) -> Result<Parsed> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => return clap_error(e),
    };
    let mut options = cli.options;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("config file '{path}': {e}"))))?;
        let mut file_argv = vec![argv[0].clone(), cli.command.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())];
        for (k, v) in parse_config_text(&text)? {
            file_argv.push(format!("--{k}"));
            file_argv.push(v);
        }
        let from_file = match Cli::try_parse_from(&file_argv) {
            Ok(c) => c.options,
            Err(e) => {
                return Err(Error::Usage(format!("in config file '{path}': {}", e.render())));
            }
        };
        options = options.overlay(from_file);
    }
    let cfg = RunConfig { command: cli.command, options };
    cfg.check_conflicts()?;
    Ok(if cli.dump_config { Parsed::DumpConfig(cfg) } else { Parsed::Run(cfg) })
}

/// Usage text.
pub fn usage() -> String {
    Cli::command().render_help().to_string()
}

/// Human formatting: `+inf` for infinity, otherwise at most 12 decimals.
pub fn fmt_human(v: f64) -> String {
    if v == f64::INFINITY {
        return "+inf".into();
    }
    if v == f64::NEG_INFINITY {
        return "-inf".into();
    }
    let s = format!("{v:.12}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" { "0".into() } else { s }
}

pub const REPORT_CSV_HEADER: &str = "method,value,argmax_r,error_estimate";

/// One CSV row for a report; infinity is written as `inf`.
pub fn report_csv_row(r: &LipschitzReport) -> String {
    format!(
        "{},{},{},{}",
        r.method,
        fmt_float(r.value),
        r.argmax_r.map(fmt_float).unwrap_or_default(),
        fmt_float(r.error_estimate)
    )
}

enum Spec {
    Network { act: Activation, gamma: f64, bias: BiasDistribution, dim: usize },
    Kernel(ShiftInvariantKernel),
}

impl RunConfig {
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.options.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn check_conflicts(&self) -> Result<()> {
        let o = &self.options;
        if o.activation.is_some() && o.kernel.is_some() {
            return Err(Error::Usage(
                "conflicting keys 'activation' and 'kernel': give one feature family".into(),
            ));
        }
        match self.command {
            CommandName::Analytic if o.kernel.is_some() => {
                Err(Error::Usage("key 'kernel' is not used by 'analytic'; use 'shift-invariant'".into()))
            }
            CommandName::ShiftInvariant if o.activation.is_some() => {
                Err(Error::Usage("key 'activation' is not used by 'shift-invariant'; use 'analytic'".into()))
            }
            _ => Ok(()),
        }
    }

    fn activation(&self) -> Activation {
        self.options.activation.unwrap_or(Activation::cosine())
    }

    fn gamma(&self) -> f64 {
        self.options.gamma.unwrap_or(1.0)
    }

    fn bias(&self) -> BiasDistribution {
        self.options.bias.unwrap_or(match self.activation() {
            Activation::ScaledCos { .. } => BiasDistribution::uniform_phase(),
            _ => BiasDistribution::Gaussian { sd: 1.0 },
        })
    }

    fn orders(&self) -> usize {
        self.options.orders.unwrap_or(DEFAULT_ORDER)
    }

    fn seed(&self) -> u64 {
        self.options.seed.unwrap_or(0)
    }

    fn h(&self) -> f64 {
        self.options.h.unwrap_or(DEFAULT_HESSIAN_STEP)
    }

    fn n_list(&self) -> Vec<usize> {
        self.options.n_list.clone().map(|l| l.0).unwrap_or_else(default_n_list)
    }

    fn shift_kernel(&self) -> Result<ShiftInvariantKernel> {
        let o = &self.options;
        let name = o.kernel.unwrap_or(KernelName::Gaussian);
        match name {
            KernelName::Laplace => ShiftInvariantKernel::laplace(o.dim.unwrap_or(1)),
            KernelName::Gaussian | KernelName::Matern => {
                let sigma = o.sigma.clone().unwrap_or(SigmaSpec::Identity).resolve(o.dim)?;
                if name == KernelName::Gaussian {
                    ShiftInvariantKernel::gaussian(sigma)
                } else {
                    ShiftInvariantKernel::matern(o.nu.unwrap_or(2.0), sigma)
                }
            }
        }
    }

    fn spec(&self) -> Result<Spec> {
        if self.command == CommandName::ShiftInvariant || self.options.kernel.is_some() {
            return Ok(Spec::Kernel(self.shift_kernel()?));
        }
        Ok(Spec::Network {
            act: self.activation(),
            gamma: self.gamma(),
            bias: self.bias(),
            dim: self.options.dim.unwrap_or(1),
        })
    }

    fn kernel_spec(&self) -> Result<KernelSpec> {
        Ok(match self.spec()? {
            Spec::Network { act, gamma, bias, dim } => KernelSpec::Network { act, gamma, bias, dim },
            Spec::Kernel(k) => KernelSpec::ShiftInvariant(k),
        })
    }

    fn network_report(&self, act: Activation, gamma: f64, bias: &BiasDistribution) -> Result<LipschitzReport> {
        let (lo, hi) = default_r_domain(gamma, bias);
        let domain = (self.options.r_min.unwrap_or(lo), self.options.r_max.unwrap_or(hi));
        rnn_lipschitz_with_order(act, gamma, bias, domain, self.options.tol.unwrap_or(DEFAULT_R_TOL), self.orders())
    }
}

fn write_or_print(path: Option<&str>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(Path::new(p), text)
            .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("cannot write '{p}': {e}")))),
        None => {
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_report(r: &LipschitzReport, out: &mut dyn Write) -> Result<()> {
    if r.method == Method::Divergent {
        writeln!(out, "Lip = +inf (divergent: infinite second moment)")?;
        return Ok(());
    }
    writeln!(out, "Lip = {}", fmt_human(r.value))?;
    writeln!(out, "method = {}", r.method)?;
    if let Some(a) = r.argmax_r {
        writeln!(out, "argmax_r = {}", fmt_human(a))?;
    }
    writeln!(out, "error_estimate = {:e}", r.error_estimate)?;
    Ok(())
}

fn write_report_csv(cfg: &RunConfig, rows: &[LipschitzReport]) -> Result<()> {
    if let Some(p) = &cfg.options.output {
        let mut text = format!("{REPORT_CSV_HEADER}\n");
        for r in rows {
            text.push_str(&report_csv_row(r));
            text.push('\n');
        }
        write_or_print(Some(p), &text, &mut io::sink())?;
    }
    Ok(())
}

fn write_svg(path: &str, title: &str, y_label: &str, name: &str, points: Vec<(f64, f64)>) -> Result<()> {
    let svg = line_chart_log_x(title, "N", y_label, &[Series { name: name.into(), points }])?;
    write_or_print(Some(path), &svg, &mut io::sink())
}

/// Executes a parsed configuration, writing human output to `out` and
/// diagnostics to `err`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let threads = cfg.options.threads;
    match cfg.command {
        CommandName::Analytic => {
            let Spec::Network { act, gamma, bias, dim } = cfg.spec()? else { unreachable!() };
            let report = with_threads(threads, || cfg.network_report(act, gamma, &bias))?;
            print_report(&report, out)?;
            let bound = feature_upper_bound(act, &WeightDistribution::isotropic_gaussian(gamma, dim)?)?;
            writeln!(out, "upper_bound = {}", fmt_human(bound.value))?;
            write_report_csv(cfg, &[report, bound])
        }
        CommandName::ShiftInvariant => {
            let kernel = cfg.shift_kernel()?;
            let report = shift_invariant_lipschitz(&kernel)?;
            print_report(&report, out)?;
            write_report_csv(cfg, &[report])
        }
        CommandName::Empirical => run_empirical(cfg, out),
        CommandName::QuantileSweep => run_sweep(cfg, out, err),
        CommandName::KernelConvergence => {
            let spec = cfg.kernel_spec()?;
            let per_axis = cfg.options.points.unwrap_or(10);
            let d = spec.dim();
            let points = lattice_grid(&vec![-1.0; d], &vec![1.0; d], per_axis)?;
            let rows = with_threads(threads, || kernel_convergence_sweep(&spec, &cfg.n_list(), &points, cfg.seed()))?;
            write_or_print(cfg.options.output.as_deref(), &format_convergence_csv(&rows), out)?;
            if rows.len() >= 2 {
                let xs: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
                if let Ok(s) = loglog_slope(&xs, &ys) {
                    writeln!(err, "log-log slope = {}", fmt_human(s))?;
                }
            }
            if let Some(p) = &cfg.options.svg {
                let pts = rows.iter().map(|&(n, e)| (n as f64, e)).collect();
                write_svg(p, "Uniform kernel approximation error", "sup |k_N - k|", "sup_error", pts)?;
            }
            Ok(())
        }
        CommandName::Crosscheck => run_crosscheck(cfg, out),
    }
}

fn run_empirical(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (fm, reference) = match &cfg.options.load_map {
        Some(p) => (RandomFeatureMap::load(Path::new(p))?, None),
        None => {
            let spec = cfg.kernel_spec()?;
            let (dist, bias, act) = spec.feature_law()?;
            let n = cfg.options.features.unwrap_or(1024);
            let fm = build_feature_map(&dist, &bias, act, n, cfg.seed())?;
            let reference = with_threads(cfg.options.threads, || spec.lipschitz_reference())?;
            (fm, Some(reference))
        }
    };
    let grid = cfg.options.grid.clone().unwrap_or(GridSpec::Default).resolve(fm.dim())?;
    let (lip, idx) = fm.empirical_lipschitz(&grid)?;
    let argmax: Vec<String> = grid[idx].iter().map(|v| fmt_human(*v)).collect();
    writeln!(out, "Lip_hat = {}", fmt_human(lip))?;
    writeln!(out, "argmax_x = {}", argmax.join(","))?;
    writeln!(out, "N = {}", fm.n_features())?;
    if let Some(r) = reference {
        writeln!(out, "reference = {}", fmt_human(r.value))?;
    }
    if let Some(p) = &cfg.options.save_map {
        fm.save(Path::new(p))?;
    }
    if let Some(p) = &cfg.options.output {
        let text = format!("N,lip_hat,argmax_index\n{},{},{}\n", fm.n_features(), fmt_float(lip), idx);
        write_or_print(Some(p), &text, out)?;
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let spec = cfg.kernel_spec()?;
    let threads = cfg.options.threads;
    let reference = with_threads(threads, || spec.lipschitz_reference())?;
    if !reference.is_finite() {
        return Err(Error::InvalidConfiguration(
            "the limiting feature map is not Lipschitz (infinite second moment); nothing to converge to".into(),
        ));
    }
    let grid = cfg.options.grid.clone().unwrap_or(GridSpec::Default).resolve(spec.dim())?;
    let sweep = QuantileSweepConfig {
        spec,
        n_list: cfg.n_list(),
        realizations: cfg.options.realizations.unwrap_or(3000),
        delta: cfg.options.delta.unwrap_or(0.9),
        grid,
        seed: cfg.seed(),
        lip_reference: reference.value,
        nested: cfg.options.nested.unwrap_or(false),
    };
    sweep.validate()?;
    let mut log = match &cfg.options.log {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => None,
    };
    let rows = with_threads(threads, || {
        quantile_sweep_with_progress(&sweep, |row| match log.as_mut() {
            Some(l) => log_row(l, row),
            None => Ok(()),
        })
    })?;
    for w in concentration_warnings(&rows, reference.value) {
        writeln!(err, "warning: {w}")?;
    }
    write_or_print(cfg.options.output.as_deref(), &format_sweep_csv(&rows), out)?;
    if let Some(p) = &cfg.options.svg {
        let pts = rows.iter().map(|r| (r.n as f64, r.t_hat)).collect();
        write_svg(p, "Empirical quantile of Lip(θ_N) − Lip(φ_k)", "t_hat", "t_hat", pts)?;
    }
    Ok(())
}

/// Largest curvature-oracle value over `checks` random points in `[-1, 1]^d`
/// and random unit directions.
fn curvature_sweep<K: Fn(&[f64], &[f64]) -> f64>(k: K, d: usize, checks: usize, h: f64, seed: u64) -> Result<f64> {
    let mut rng = StreamKey::from_seed(seed).derive(0xC0DE).rng();
    let mut best = 0.0f64;
    for _ in 0..checks {
        let x: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let mut z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= norm);
        best = best.max(diagonal_curvature_oracle(&k, &x, &z, h)?);
    }
    Ok(best)
}

fn run_crosscheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let checks = cfg.options.checks.unwrap_or(20);
    if checks == 0 {
        return Err(invalid("checks must be at least 1"));
    }
    let h = cfg.h();
    let mut values: Vec<(String, f64)> = Vec::new();
    match cfg.spec()? {
        Spec::Kernel(kernel) => {
            let cov = shift_invariant_lipschitz(&kernel)?;
            if !cov.is_finite() {
                writeln!(out, "{} = +inf (divergent: infinite second moment)", Method::Covariance)?;
            }
            let hess = hessian_lipschitz_oracle(&kernel, h)?;
            let curv = curvature_sweep(|x, y| kernel.eval(x, y).unwrap_or(f64::NAN), kernel.dim(), checks, h, cfg.seed())?;
            values.push((cov.method.to_string(), cov.value));
            values.push((hess.method.to_string(), hess.value));
            values.push(("curvature".into(), curv));
        }
        Spec::Network { act, gamma, bias, dim } => {
            let exact = with_threads(cfg.options.threads, || cfg.network_report(act, gamma, &bias))?;
            values.push((exact.method.to_string(), exact.value));
            let spec = KernelSpec::Network { act, gamma, bias, dim };
            if spec.closed_form_kernel(&vec![0.0; dim], &vec![0.0; dim]).is_ok() {
                let curv = curvature_sweep(|x, y| spec.closed_form_kernel(x, y).unwrap_or(f64::NAN), dim, checks, h, cfg.seed())?;
                values.push(("curvature".into(), curv));
            } else {
                writeln!(out, "curvature = n/a (no closed-form kernel)")?;
            }
            let bound = feature_upper_bound(act, &WeightDistribution::isotropic_gaussian(gamma, dim)?)?;
            writeln!(out, "{} = {}", bound.method, fmt_human(bound.value))?;
            if bound.value < exact.value - 1e-6 {
                return Err(Error::NumericalFailure("upper bound is below the exact constant".into()));
            }
        }
    }
    for (name, v) in &values {
        writeln!(out, "{name} = {}", fmt_human(*v))?;
    }
    let reference = values[0].1;
    let spread = values.iter().map(|(_, v)| ((v - reference) / reference).abs()).fold(0.0, f64::max);
    writeln!(out, "max relative disagreement = {spread:e}")?;
    if spread > 1e-2 {
        return Err(Error::NumericalFailure(format!("routes disagree by {spread:e} (relative), above 1e-2")));
    }
    Ok(())
}

/// Entry point shared by the binary and the tests; returns the exit status.
pub fn main_with_args(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = parse_config(argv).and_then(|parsed| match parsed {
        Parsed::Display(text) => {
            out.write_all(text.as_bytes())?;
            Ok(())
        }
        Parsed::DumpConfig(cfg) => {
            out.write_all(cfg.dump().as_bytes())?;
            Ok(())
        }
        Parsed::Run(cfg) => run(&cfg, out, err),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                Error::Usage(text) => {
                    let _ = writeln!(err, "{}", text.trim_end());
                }
                other => {
                    let _ = writeln!(err, "error: {other}");
                }
            }
            e.exit_code()
        }
    }
}
