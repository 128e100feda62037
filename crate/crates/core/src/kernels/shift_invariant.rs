use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::kernels::WeightDistribution;
use crate::numerics::special::matern_profile;
use crate::numerics::{spd_inverse, Matrix};

/// Textual description of a positive-definite matrix: `identity`,
/// `diag:a,b,…`, or `file:PATH` (whitespace-separated, row-major, square).
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    Identity,
    Diag(Vec<f64>),
    File(String),
}

impl SigmaSpec {
    /// Materializes the matrix for dimension `dim`; `dim = None` takes the
    /// dimension implied by the spec.
    pub fn resolve(&self, dim: Option<usize>) -> Result<Matrix> {
        let m = match self {
            SigmaSpec::Identity => Matrix::identity(dim.unwrap_or(1)),
            SigmaSpec::Diag(v) => Matrix::diag(v),
            SigmaSpec::File(path) => read_matrix_file(Path::new(path))?,
        };
        if let Some(d) = dim {
            if m.rows() != d {
                return Err(invalid(format!("sigma is {}x{} but dim = {d}", m.rows(), m.cols())));
            }
        }
        Ok(m)
    }
}

fn read_matrix_file(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| invalid(format!("bad matrix entry '{t}' in {}", path.display()))))
        .collect::<Result<Vec<f64>>>()?;
    let d = (values.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != values.len() {
        return Err(invalid(format!("{} does not hold a square matrix ({} entries)", path.display(), values.len())));
    }
    Matrix::from_row_major(d, d, values)
}

impl FromStr for SigmaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(SigmaSpec::Identity);
        }
        if let Some(rest) = s.strip_prefix("diag:") {
            let v = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(format!("bad diagonal entry '{t}'"))))
                .collect::<Result<Vec<f64>>>()?;
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(invalid("diagonal entries must be positive"));
            }
            return Ok(SigmaSpec::Diag(v));
        }
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(invalid("file: needs a path"));
            }
            return Ok(SigmaSpec::File(path.to_string()));
        }
        Err(invalid(format!("unknown sigma '{s}' (expected identity, diag:a,b,..., file:PATH)")))
    }
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Identity => f.write_str("identity"),
            SigmaSpec::Diag(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "diag:{}", parts.join(","))
            }
            SigmaSpec::File(p) => write!(f, "file:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `exp(-½ ΔᵀΣΔ)`.
    Gaussian { sigma: Matrix },
    /// `2^{1-ν}/Γ(ν) z^ν K_ν(z)` with `z = sqrt(2ν ΔᵀΣ⁻¹Δ)`.
    Matern { nu: f64, sigma: Matrix, sigma_inv: Matrix },
    /// `exp(-‖Δ‖)`.
    Laplace { dim: usize },
}

/// Stationary kernel `k(x, y) = κ(x − y)` together with its normalized
/// spectral law.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftInvariantKernel {
    family: KernelFamily,
    spectral: WeightDistribution,
}

impl ShiftInvariantKernel {
    pub fn gaussian(sigma: Matrix) -> Result<Self> {
        let spectral = WeightDistribution::gaussian_cov(sigma.clone())?;
        Ok(ShiftInvariantKernel { family: KernelFamily::Gaussian { sigma }, spectral })
    }

    /// Isotropic Gaussian `exp(-γ²‖Δ‖²/2)`.
    pub fn gaussian_isotropic(gamma: f64, dim: usize) -> Result<Self> {
        let spectral = WeightDistribution::isotropic_gaussian(gamma, dim)?;
        let sigma = Matrix::identity(dim).scaled(gamma * gamma);
        Ok(ShiftInvariantKernel { family: KernelFamily::Gaussian { sigma }, spectral })
    }

    /// Matérn kernel of smoothness `nu`; its spectral law is the Student
    /// `t_{2ν}(0, Σ⁻¹)`.
    pub fn matern(nu: f64, sigma: Matrix) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid(format!("Matérn smoothness must be positive, got {nu}")));
        }
        let sigma_inv = spd_inverse(&sigma)?;
        let spectral = WeightDistribution::student_t(2.0 * nu, sigma_inv.clone())?;
        Ok(ShiftInvariantKernel { family: KernelFamily::Matern { nu, sigma, sigma_inv }, spectral })
    }

    /// `exp(-‖Δ‖)`, whose spectral law is the multivariate Cauchy.
    pub fn laplace(dim: usize) -> Result<Self> {
        let spectral = WeightDistribution::cauchy(dim)?;
        Ok(ShiftInvariantKernel { family: KernelFamily::Laplace { dim }, spectral })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            KernelFamily::Gaussian { .. } => "gaussian",
            KernelFamily::Matern { .. } => "matern",
            KernelFamily::Laplace { .. } => "laplace",
        }
    }

    pub fn spectral(&self) -> &WeightDistribution {
        &self.spectral
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            KernelFamily::Gaussian { sigma } | KernelFamily::Matern { sigma, .. } => sigma.rows(),
            KernelFamily::Laplace { dim } => *dim,
        }
    }

    pub fn kappa0(&self) -> f64 {
        1.0
    }

    /// `κ(Δ)` without the dimension check.
    pub(crate) fn kappa_unchecked(&self, delta: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { sigma } => (-0.5 * quad_form(sigma, delta)).exp(),
            KernelFamily::Matern { nu, sigma_inv, .. } => {
                let q = quad_form(sigma_inv, delta).max(0.0);
                matern_profile(*nu, (2.0 * nu * q).sqrt())
            }
            KernelFamily::Laplace { .. } => (-delta.iter().map(|x| x * x).sum::<f64>().sqrt()).exp(),
        }
    }

    pub fn kappa(&self, delta: &[f64]) -> Result<f64> {
        if delta.len() != self.dim() {
            return Err(invalid(format!(
                "Δ has dimension {} but the kernel has dimension {}",
                delta.len(),
                self.dim()
            )));
        }
        Ok(self.kappa_unchecked(delta))
    }

    /// `k(x, y) = κ(x − y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(invalid("x and y have different dimensions"));
        }
        let delta: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.kappa(&delta)
    }
}

fn quad_form(m: &Matrix, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        s += vi * m.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{sample_weights, BiasDistribution, MomentStatus};
    use crate::rng::StreamKey;

    fn catalogue() -> Vec<ShiftInvariantKernel> {
        vec![
            ShiftInvariantKernel::gaussian(Matrix::identity(2)).unwrap(),
            ShiftInvariantKernel::gaussian(Matrix::diag(&[1.0, 4.0])).unwrap(),
            ShiftInvariantKernel::matern(2.0, Matrix::identity(2)).unwrap(),
            ShiftInvariantKernel::matern(1.5, Matrix::diag(&[0.5, 2.0])).unwrap(),
            ShiftInvariantKernel::matern(0.5, Matrix::identity(2)).unwrap(),
            ShiftInvariantKernel::laplace(2).unwrap(),
        ]
    }

    #[test]
    fn value_at_zero_is_one() {
        for k in catalogue() {
            assert_eq!(k.kappa(&[0.0, 0.0]).unwrap(), 1.0);
        }
    }

    #[test]
    fn gaussian_plug_in() {
        let k = ShiftInvariantKernel::gaussian(Matrix::identity(2)).unwrap();
        assert!((k.kappa(&[1.0, 1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matern_half_is_exponential() {
        let k = ShiftInvariantKernel::matern(0.5, Matrix::identity(1)).unwrap();
        for r in [0.01, 0.3, 1.0, 2.5] {
            assert!((k.kappa(&[r]).unwrap() - (-r).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn matern_rises_to_one_from_below() {
        let k = ShiftInvariantKernel::matern(2.0, Matrix::identity(2)).unwrap();
        let mut prev = 0.0;
        for e in 1..=12 {
            let r = 10f64.powi(-e).sqrt();
            let v = k.kappa(&[r, 0.0]).unwrap();
            assert!(v < 1.0 + 1e-15 && v >= prev, "r={r}: {v}");
            prev = v;
        }
        assert!(1.0 - prev < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let k = ShiftInvariantKernel::laplace(3).unwrap();
        assert!(matches!(k.kappa(&[0.0, 1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn moment_status_of_catalogue() {
        let finite: Vec<bool> = catalogue().iter().map(|k| k.spectral().second_moment_status().is_finite()).collect();
        assert_eq!(finite, vec![true, true, true, true, false, false]);
        let MomentStatus::Finite(c) = catalogue()[2].spectral().second_moment_status() else { panic!() };
        assert_eq!(c, Matrix::identity(2).scaled(2.0));
    }

    #[test]
    fn sigma_spec_parsing() {
        assert_eq!("identity".parse::<SigmaSpec>().unwrap().resolve(Some(3)).unwrap(), Matrix::identity(3));
        assert_eq!(
            "diag:1,4".parse::<SigmaSpec>().unwrap().resolve(None).unwrap(),
            Matrix::diag(&[1.0, 4.0])
        );
        assert!("diag:1,4".parse::<SigmaSpec>().unwrap().resolve(Some(3)).is_err());
        assert!("diag:1,-4".parse::<SigmaSpec>().is_err());
        assert!("full:1".parse::<SigmaSpec>().is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        std::fs::write(&p, "2 0.5\n0.5 1\n").unwrap();
        let spec: SigmaSpec = format!("file:{}", p.display()).parse().unwrap();
        assert_eq!(spec.resolve(Some(2)).unwrap(), Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap());
        std::fs::write(&p, "1 2 3").unwrap();
        assert!(spec.resolve(None).is_err());
    }

    proptest::proptest! {
        #[test]
        fn symmetric_and_bounded_by_value_at_zero(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            for k in catalogue() {
                let v = k.kappa(&[a, b]).unwrap();
                proptest::prop_assert!((v - k.kappa(&[-a, -b]).unwrap()).abs() < 1e-14);
                proptest::prop_assert!(v.abs() <= k.kappa0());
            }
        }
    }

    #[test]
    fn cosine_average_of_spectral_law_reproduces_kernel() {
        let n = 1_000_000;
        let mut dirs = StreamKey::from_seed(99).rng();
        for (idx, k) in catalogue().into_iter().enumerate() {
            if !k.spectral().second_moment_status().is_finite() {
                continue;
            }
            let (w, _) = sample_weights(k.spectral(), &BiasDistribution::PointMass, n, 1000 + idx as u64).unwrap();
            for _ in 0..10 {
                let radius = 2.0 * dirs.uniform();
                let angle = std::f64::consts::TAU * dirs.uniform();
                let delta = [radius * angle.cos(), radius * angle.sin()];
                let (mut s1, mut s2) = (0.0, 0.0);
                for i in 0..n {
                    let c = (w[(i, 0)] * delta[0] + w[(i, 1)] * delta[1]).cos();
                    s1 += c;
                    s2 += c * c;
                }
                let mc = s1 / n as f64;
                let se = ((s2 / n as f64 - mc * mc) / n as f64).sqrt();
                let exact = k.kappa(&delta).unwrap();
                // 1% relative, widened to 4 standard errors where κ is too
                // small for 10⁶ samples to resolve 1%.
                let tol = (0.01 * exact).max(4.0 * se);
                assert!(
                    (mc - exact).abs() <= tol,
                    "{} Δ={delta:?}: mc={mc} exact={exact} se={se}",
                    k.family_name()
                );
            }
        }
    }
}
