//! Finite random feature maps `θ_N(x) = N^{-1/2} [σ(w_iᵀx + b_i)]_i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::kernels::{sample_features, Activation, BiasDistribution, WeightDistribution};
use crate::numerics::{sym_eig_max, Matrix};
use crate::rng::StreamKey;

/// Magic bytes of the binary feature-map layout.
pub const RFM_MAGIC: &[u8; 4] = b"RFM1";
/// Largest lattice produced by [`lattice_grid`].
pub const MAX_GRID_POINTS: usize = 10_000;

/// Law and seed a feature map was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSource {
    pub weights: WeightDistribution,
    pub bias: BiasDistribution,
    pub seed: u64,
}

/// A frozen draw `(W, b)` with its activation. Rows of `W` are neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureMap {
    weights: Matrix,
    biases: Vec<f64>,
    activation: Activation,
    scale: f64,
    source: Option<FeatureSource>,
    seed: u64,
}

/// Draws `n` features from `seed`.
pub fn build_feature_map(
    dist: &WeightDistribution,
    bias: &BiasDistribution,
    act: Activation,
    n: usize,
    seed: u64,
) -> Result<RandomFeatureMap> {
    let mut fm = build_feature_map_from_stream(dist, bias, act, n, StreamKey::from_seed(seed))?;
    fm.seed = seed;
    if let Some(src) = fm.source.as_mut() {
        src.seed = seed;
    }
    Ok(fm)
}

/// Draws `n` features from an explicit stream; feature `i` uses
/// `stream.derive(i)`, so smaller draws are prefixes of larger ones.
pub fn build_feature_map_from_stream(
    dist: &WeightDistribution,
    bias: &BiasDistribution,
    act: Activation,
    n: usize,
    stream: StreamKey,
) -> Result<RandomFeatureMap> {
    if n == 0 {
        return Err(invalid("a feature map needs at least one feature"));
    }
    let (weights, biases) = sample_features(dist, bias, n, stream)?;
    let mut fm = RandomFeatureMap::from_parts(weights, biases, act)?;
    fm.seed = stream.raw();
    fm.source = Some(FeatureSource { weights: dist.clone(), bias: *bias, seed: stream.raw() });
    Ok(fm)
}

impl RandomFeatureMap {
    /// Feature map with explicitly given weights (rows) and biases.
    pub fn from_parts(weights: Matrix, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(invalid("weights must be a non-empty N x d matrix"));
        }
        if biases.len() != weights.rows() {
            return Err(invalid(format!("{} biases for {} features", biases.len(), weights.rows())));
        }
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return Err(invalid("weights and biases must be finite"));
        }
        let scale = (weights.rows() as f64).sqrt().recip();
        Ok(RandomFeatureMap { weights, biases, activation, scale, source: None, seed: 0 })
    }

    pub fn n_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn source(&self) -> Option<&FeatureSource> {
        self.source.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!("point has dimension {} but the map expects {}", x.len(), self.dim())));
        }
        Ok(())
    }

    #[inline]
    fn preactivation(&self, i: usize, x: &[f64]) -> f64 {
        self.weights.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[i]
    }

    /// `θ_N(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..self.n_features())
            .map(|i| self.scale * self.activation.value(self.preactivation(i, x)))
            .collect())
    }

    /// `k_N(x, y) = θ_N(x)ᵀθ_N(y)`.
    pub fn empirical_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.prefix_kernel(self.n_features(), x, y))
    }

    /// Kernel of the first `n` features, rescaled as a map of width `n`.
    pub(crate) fn prefix_kernel(&self, n: usize, x: &[f64], y: &[f64]) -> f64 {
        let act = self.activation;
        let s: f64 = (0..n)
            .map(|i| act.value(self.preactivation(i, x)) * act.value(self.preactivation(i, y)))
            .sum();
        s / n as f64
    }

    /// Exact Jacobian; row `i` is `N^{-1/2} σ′(w_iᵀx + b_i) w_iᵀ`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_dim(x)?;
        let (n, d) = (self.n_features(), self.dim());
        let mut jac = Matrix::zeros(n, d);
        for i in 0..n {
            let c = self.scale * self.activation.derivative(self.preactivation(i, x));
            for (j, &w) in self.weights.row(i).iter().enumerate() {
                jac[(i, j)] = c * w;
            }
        }
        Ok(jac)
    }

    /// `JᵀJ = N^{-1} Σ_i σ′(w_iᵀx + b_i)² w_i w_iᵀ`.
    pub fn jacobian_gram(&self, x: &[f64]) -> Result<Matrix> {
        self.check_dim(x)?;
        let d = self.dim();
        let mut g = Matrix::zeros(d, d);
        for i in 0..self.n_features() {
            let s = self.activation.derivative(self.preactivation(i, x));
            let s2 = s * s;
            if s2 == 0.0 {
                continue;
            }
            let row = self.weights.row(i);
            for a in 0..d {
                let ra = s2 * row[a];
                for b in 0..=a {
                    g[(a, b)] += ra * row[b];
                }
            }
        }
        let inv_n = (self.n_features() as f64).recip();
        for a in 0..d {
            for b in 0..=a {
                let v = g[(a, b)] * inv_n;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        Ok(g)
    }

    /// Operator norm of the Jacobian at `x`.
    pub fn jacobian_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if self.dim() == 1 {
            let x0 = x[0];
            let mut s = 0.0;
            for (i, &b) in self.biases.iter().enumerate() {
                let w = self.weights[(i, 0)];
                let t = w * self.activation.derivative(w * x0 + b);
                s += t * t;
            }
            return Ok((s / self.n_features() as f64).sqrt());
        }
        Ok(sym_eig_max(&self.jacobian_gram(x)?)?.max(0.0).sqrt())
    }

    /// Largest Jacobian norm over `grid`, with the index of the first
    /// maximizing point.
    pub fn empirical_lipschitz(&self, grid: &[Vec<f64>]) -> Result<(f64, usize)> {
        if grid.is_empty() {
            return Err(invalid("grid must contain at least one point"));
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, x) in grid.iter().enumerate() {
            let v = self.jacobian_norm(x)?;
            if v > best.0 {
                best = (v, j);
            }
        }
        Ok(best)
    }

    /// Writes the binary layout: `RFM1`, N and d (u64), activation id (u32),
    /// seed (u64), then weights row-major and biases, all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        if let Activation::ScaledCos { kappa0 } = self.activation {
            if kappa0 != 1.0 {
                return Err(Error::Unsupported(format!(
                    "the binary layout only stores unit-amplitude cosine features (kappa0 = {kappa0})"
                )));
            }
        }
        out.write_all(RFM_MAGIC)?;
        out.write_all(&(self.n_features() as u64).to_le_bytes())?;
        out.write_all(&(self.dim() as u64).to_le_bytes())?;
        out.write_all(&self.activation.id().to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in self.weights.as_slice().iter().chain(&self.biases) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != RFM_MAGIC {
            return Err(invalid("not a feature-map file (bad magic)"));
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let d = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b4)?;
        let act = Activation::from_id(u32::from_le_bytes(b4))?;
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let count = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_add(n))
            .filter(|&c| c <= 1 << 32)
            .ok_or_else(|| invalid(format!("implausible feature-map size {n} x {d}")))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let biases = values.split_off(n * d);
        let mut fm = RandomFeatureMap::from_parts(Matrix::from_row_major(n, d, values)?, biases, act)?;
        fm.seed = seed;
        Ok(fm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// The 99 points `x_j = −1 + 2j/100`, `j = 1..99`.
pub fn default_grid_1d() -> Vec<f64> {
    (1..=99).map(|j| -1.0 + 2.0 * j as f64 / 100.0).collect()
}

/// One-dimensional points as grid vectors.
pub fn grid_from_scalars(points: &[f64]) -> Vec<Vec<f64>> {
    points.iter().map(|&x| vec![x]).collect()
}

/// Uniform lattice with `per_axis` points per coordinate on the box
/// `[lo, hi]`, endpoints included; at most [`MAX_GRID_POINTS`] points.
pub fn lattice_grid(lo: &[f64], hi: &[f64], per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(invalid("box corners must be non-empty and of equal dimension"));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(invalid("box needs lo < hi in every coordinate"));
    }
    if per_axis < 1 {
        return Err(invalid("need at least one point per axis"));
    }
    let total = (per_axis as u128).checked_pow(lo.len() as u32).unwrap_or(u128::MAX);
    if total > MAX_GRID_POINTS as u128 {
        return Err(invalid(format!("lattice of {total} points exceeds the cap of {MAX_GRID_POINTS}")));
    }
    let coord = |axis: usize, k: usize| {
        if per_axis == 1 {
            0.5 * (lo[axis] + hi[axis])
        } else {
            lo[axis] + (hi[axis] - lo[axis]) * k as f64 / (per_axis - 1) as f64
        }
    };
    let d = lo.len();
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; d];
    loop {
        out.push((0..d).map(|a| coord(a, idx[a])).collect());
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ShiftInvariantKernel;
    use crate::numerics::{spectral_norm, sym_eigenvalues};

    fn rff(n: usize, seed: u64) -> RandomFeatureMap {
        build_feature_map(
            &WeightDistribution::isotropic_gaussian(1.0, 1).unwrap(),
            &BiasDistribution::uniform_phase(),
            Activation::cosine(),
            n,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(rff(64, 4), rff(64, 4));
        assert_ne!(rff(64, 4).weights(), rff(64, 5).weights());
    }

    #[test]
    fn single_identity_feature() {
        let fm = RandomFeatureMap::from_parts(Matrix::diag(&[1.0]), vec![0.0], Activation::Identity).unwrap();
        assert_eq!(fm.evaluate(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn cosine_features_are_bounded() {
        let fm = rff(500, 1);
        let bound = 2f64.sqrt();
        for x in [-30.0, -1.0, 0.0, 0.3, 12.0] {
            let v = fm.evaluate(&[x]).unwrap();
            assert!(v.iter().all(|t| t.abs() * (500f64).sqrt() <= bound + 1e-15));
        }
    }

    #[test]
    fn kernel_diagonal_and_single_feature() {
        let fm = rff(50, 2);
        let v = fm.evaluate(&[0.4]).unwrap();
        let kxx = fm.empirical_kernel(&[0.4], &[0.4]).unwrap();
        assert!((kxx - v.iter().map(|t| t * t).sum::<f64>()).abs() < 1e-14 && kxx >= 0.0);

        let one = RandomFeatureMap::from_parts(Matrix::diag(&[1.5]), vec![0.2], Activation::Tanh).unwrap();
        let want = (1.5f64 * 0.3 + 0.2).tanh() * (1.5f64 * -0.7 + 0.2).tanh();
        assert!((one.empirical_kernel(&[0.3], &[-0.7]).unwrap() - want).abs() < 1e-15);
        assert!(one.empirical_kernel(&[0.3], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn random_fourier_kernel_approximates_gaussian() {
        let n = 100_000;
        let fm = rff(n, 7);
        let k = fm.empirical_kernel(&[0.0], &[1.0]).unwrap();
        assert!((k - (-0.5f64).exp()).abs() < 0.02);
        assert!((k - (-0.5f64).exp()).abs() < 3.0 * 2f64.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn identity_jacobian_is_scaled_weights() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3], vec![0.0, 4.0]]).unwrap();
        let fm = RandomFeatureMap::from_parts(w.clone(), vec![0.0; 3], Activation::Identity).unwrap();
        let want = w.scaled(3f64.sqrt().recip());
        for x in [[0.0, 0.0], [5.0, -2.0]] {
            let j = fm.jacobian(&x).unwrap();
            assert!(j.as_slice().iter().zip(want.as_slice()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
        let grid = lattice_grid(&[-1.0, -1.0], &[1.0, 1.0], 5).unwrap();
        let (lip, idx) = fm.empirical_lipschitz(&grid).unwrap();
        assert!((lip - spectral_norm(&want).unwrap()).abs() < 1e-12);
        assert_eq!(idx, 0);
    }

    #[test]
    fn relu_inactive_everywhere_has_zero_jacobian() {
        let w = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let fm = RandomFeatureMap::from_parts(w, vec![-10.0, -10.0], Activation::Relu).unwrap();
        assert!(fm.jacobian(&[0.5]).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_hand_computed_lipschitz() {
        let fm = RandomFeatureMap::from_parts(Matrix::diag(&[2.0]), vec![-1.0], Activation::Relu).unwrap();
        let (lip, idx) = fm.empirical_lipschitz(&grid_from_scalars(&default_grid_1d())).unwrap();
        assert_eq!(lip, 2.0);
        // First grid point with 2x − 1 > 0 is x = 0.52 (j = 76).
        assert_eq!(idx, 75);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = 1e-5;
        let mut pts = StreamKey::from_seed(31).rng();
        for act in [Activation::Identity, Activation::Tanh, Activation::cosine()] {
            let fm = build_feature_map(
                &WeightDistribution::isotropic_gaussian(1.0, 3).unwrap(),
                &BiasDistribution::gaussian(1.0).unwrap(),
                act,
                40,
                11,
            )
            .unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| pts.uniform_range(-2.0, 2.0)).collect();
                let jac = fm.jacobian(&x).unwrap();
                for j in 0..3 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fp = fm.evaluate(&xp).unwrap();
                    let fmv = fm.evaluate(&xm).unwrap();
                    for i in 0..40 {
                        let fd = (fp[i] - fmv[i]) / (2.0 * h);
                        assert!((jac[(i, j)] - fd).abs() < 1e-6, "{act}");
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_norm_agrees_with_full_matrix() {
        let fm = build_feature_map(
            &WeightDistribution::isotropic_gaussian(1.0, 2).unwrap(),
            &BiasDistribution::uniform_phase(),
            Activation::cosine(),
            30,
            3,
        )
        .unwrap();
        let x = [0.3, -0.2];
        let direct = spectral_norm(&fm.jacobian(&x).unwrap()).unwrap();
        assert!((fm.jacobian_norm(&x).unwrap() - direct).abs() < 1e-12);

        let one_d = rff(30, 3);
        let direct = spectral_norm(&one_d.jacobian(&[0.1]).unwrap()).unwrap();
        assert!((one_d.jacobian_norm(&[0.1]).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn empirical_lipschitz_rejects_empty_grid() {
        assert!(rff(4, 0).empirical_lipschitz(&[]).is_err());
    }

    #[test]
    fn default_grid_points() {
        let g = default_grid_1d();
        assert_eq!(g.len(), 99);
        assert!((g[0] + 0.98).abs() < 1e-15);
        assert_eq!(g[49], 0.0);
        assert!((g[98] - 0.98).abs() < 1e-15);
    }

    #[test]
    fn lattice_cap_and_shape() {
        let g = lattice_grid(&[0.0, -1.0], &[1.0, 1.0], 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
        assert!(lattice_grid(&[0.0; 3], &[1.0; 3], 22).is_err());
        assert!(lattice_grid(&[0.0; 2], &[1.0; 2], 100).is_ok());
    }

    #[test]
    fn binary_round_trip() {
        let fm = build_feature_map(
            &WeightDistribution::isotropic_gaussian(1.0, 3).unwrap(),
            &BiasDistribution::gaussian(0.5).unwrap(),
            Activation::Relu,
            17,
            99,
        )
        .unwrap();
        let mut buf = Vec::new();
        fm.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], RFM_MAGIC);
        assert_eq!(buf.len(), 4 + 8 + 8 + 4 + 8 + 8 * (17 * 3 + 17));
        let back = RandomFeatureMap::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.weights(), fm.weights());
        assert_eq!(back.biases(), fm.biases());
        assert_eq!(back.activation(), fm.activation());
        assert_eq!(back.seed(), 99);
        buf[0] = b'X';
        assert!(RandomFeatureMap::read_from(buf.as_slice()).is_err());

        let scaled = RandomFeatureMap::from_parts(Matrix::diag(&[1.0]), vec![0.0], Activation::scaled_cos(2.0).unwrap())
            .unwrap();
        assert!(matches!(scaled.write_to(Vec::new()), Err(Error::Unsupported(_))));
    }

    proptest::proptest! {
        #[test]
        fn gram_on_grid_points_is_psd(seed in 0u64..1000, picks in proptest::collection::vec(0usize..99, 5)) {
            let fm = rff(256, seed);
            let grid = default_grid_1d();
            let mut g = Matrix::zeros(5, 5);
            for a in 0..5 {
                for b in 0..5 {
                    g[(a, b)] = fm.empirical_kernel(&[grid[picks[a]]], &[grid[picks[b]]]).unwrap();
                }
            }
            let min = sym_eigenvalues(&g.symmetrized()).unwrap()[0];
            proptest::prop_assert!(min >= -1e-10);
        }

        #[test]
        fn finer_grid_never_lowers_the_estimate(seed in 0u64..1000, stride in 2usize..7) {
            let fm = build_feature_map(
                &WeightDistribution::isotropic_gaussian(1.0, 1).unwrap(),
                &BiasDistribution::gaussian(1.0).unwrap(),
                Activation::Relu,
                64,
                seed,
            ).unwrap();
            let full = grid_from_scalars(&default_grid_1d());
            let coarse: Vec<Vec<f64>> = full.iter().step_by(stride).cloned().collect();
            proptest::prop_assert!(fm.empirical_lipschitz(&full).unwrap().0 >= fm.empirical_lipschitz(&coarse).unwrap().0);
        }
    }

    #[test]
    fn kernel_consistency_rate() {
        // Common random numbers: prefixes of one large draw.
        let fm = rff(1 << 14, 5);
        let exact = ShiftInvariantKernel::gaussian_isotropic(1.0, 1).unwrap();
        let (x, y) = ([0.25], [-0.6]);
        let want = exact.eval(&x, &y).unwrap();
        for p in 4..=14 {
            let n = 1usize << p;
            let err = (fm.prefix_kernel(n, &x, &y) - want).abs();
            assert!(err <= 5.0 / (n as f64).sqrt(), "N={n}: {err}");
        }
    }
}
