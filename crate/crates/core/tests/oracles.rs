//! Brute-force Monte-Carlo oracles for the quadrature-based constants and the
//! random-feature experiments.

use rayon::prelude::*;

use featlip::analytic::{nu_function, rnn_lipschitz, variance_decomposition_check, DEFAULT_R_TOL};
use featlip::experiments::{quantile_sweep, KernelSpec, QuantileSweepConfig};
use featlip::features::{build_feature_map, default_grid_1d, grid_from_scalars};
use featlip::kernels::{Activation, BiasDistribution, ShiftInvariantKernel, WeightDistribution};
use featlip::rng::StreamKey;

/// Per-r sample mean and standard error of `ζ²σ′(ζr + b)²`, with one shared set
/// of `(ζ, b)` draws across all r.
fn mc_profile(act: Activation, gamma: f64, bias: &BiasDistribution, rs: &[f64], samples: usize, seed: u64) -> Vec<(f64, f64)> {
    const CHUNK: usize = 1 << 16;
    let chunks = samples.div_ceil(CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = StreamKey::from_seed(seed).derive(c as u64).rng();
            let mut s = vec![(0.0f64, 0.0f64); rs.len()];
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                let zeta = gamma * rng.normal();
                let b = bias.sample(&mut rng);
                for (acc, &r) in s.iter_mut().zip(rs) {
                    let d = act.derivative(zeta * r + b);
                    let v = zeta * zeta * d * d;
                    acc.0 += v;
                    acc.1 += v * v;
                }
            }
            s
        })
        .collect::<Vec<_>>();
    (0..rs.len())
        .map(|j| {
            let (s, s2) = sums.iter().fold((0.0, 0.0), |a, c| (a.0 + c[j].0, a.1 + c[j].1));
            let n = samples as f64;
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0);
            (mean, (var / n).sqrt())
        })
        .collect()
}

#[test]
fn tanh_constant_matches_monte_carlo_sup() {
    let bias = BiasDistribution::Gaussian { sd: 1.0 };
    let rs: Vec<f64> = (0..64).map(|j| 10.0 * j as f64 / 63.0).collect();
    let exact = rnn_lipschitz(Activation::Tanh, 1.0, &bias, (0.0, 10.0), DEFAULT_R_TOL).unwrap();
    let mc = mc_profile(Activation::Tanh, 1.0, &bias, &rs, 10_000_000, 2024);
    let (jmax, &(mc_max, se)) = mc.iter().enumerate().max_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).unwrap();
    let quad_grid_max = rs.iter().map(|&r| nu_function(Activation::Tanh, 1.0, &bias, r).unwrap()).fold(0.0, f64::max);

    // Oracle sup on the grid vs quadrature sup on the same grid.
    assert!((mc_max - quad_grid_max).abs() <= 3.0 * se, "mc {mc_max} ± {se} at r={}, quad {quad_grid_max}", rs[jmax]);
    // The continuous maximum dominates the grid one and differs only by grid spacing.
    let lip2 = exact.value * exact.value;
    assert!(lip2 >= quad_grid_max - 1e-12);
    assert!((exact.value - mc_max.sqrt()).abs() <= 3.0 * se / (2.0 * exact.value) + 1e-3 * exact.value);
}

#[test]
fn relu_decomposition_at_orthogonal_pair() {
    let bias = BiasDistribution::Gaussian { sd: 1.0 };
    let v = variance_decomposition_check(Activation::Relu, 1.0, &bias, &[1.0, 0.0], &[0.0, 1.0], 10_000_000, 1).unwrap();
    assert!((v.lhs - v.rhs).abs() <= 3.0 * v.standard_error, "{v:?}");
    // With x ⟂ z only the α term survives, and α = P(ζ + b > 0) = 1/2.
    assert!((v.rhs - 0.5).abs() < 1e-10);
}

#[test]
fn cosine_decomposition_random_pairs() {
    let bias = BiasDistribution::uniform_phase();
    let mut rng = StreamKey::from_seed(5).rng();
    for seed in 0..3 {
        let x: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
        let z: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
        let v = variance_decomposition_check(Activation::cosine(), 1.3, &bias, &x, &z, 10_000_000, seed).unwrap();
        assert!((v.lhs - v.rhs).abs() <= 3.0 * v.standard_error, "{v:?}");
    }
}

#[test]
fn wide_random_fourier_maps_concentrate_near_gamma() {
    let grid = grid_from_scalars(&default_grid_1d());
    let dist = WeightDistribution::isotropic_gaussian(1.0, 1).unwrap();
    let bias = BiasDistribution::uniform_phase();
    for seed in 0..20 {
        let fm = build_feature_map(&dist, &bias, Activation::cosine(), 1 << 14, seed).unwrap();
        let (lip, _) = fm.empirical_lipschitz(&grid).unwrap();
        assert!((lip - 1.0).abs() < 0.1, "seed {seed}: {lip}");
    }
}

#[test]
fn quantile_decreases_over_three_widths() {
    let spec = KernelSpec::ShiftInvariant(ShiftInvariantKernel::gaussian_isotropic(1.0, 1).unwrap());
    let mut ok = 0;
    for seed in 0..20 {
        let cfg = QuantileSweepConfig {
            spec: spec.clone(),
            n_list: vec![16, 256, 4096],
            realizations: 300,
            delta: 0.9,
            grid: grid_from_scalars(&default_grid_1d()),
            seed,
            lip_reference: 1.0,
            nested: false,
        };
        let rows = quantile_sweep(&cfg).unwrap();
        let decreasing = rows[1].t_hat < rows[0].t_hat && rows[2].t_hat < rows[1].t_hat;
        ok += usize::from(decreasing && rows[2].t_hat.abs() < 0.2);
    }
    assert!(ok >= 18, "{ok}/20 seeds");
}
