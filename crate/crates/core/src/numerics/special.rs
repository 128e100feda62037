//! Modified Bessel function of the second kind and the Matérn profile.

/// Below this argument the Matérn profile is replaced by its limit 1.
pub const MATERN_SMALL_ARG: f64 = 1e-8;

/// `z^ν K_ν(z)` for `ν ≥ 0`, `z > 0`.
///
/// Uses `K_ν(z) = ∫_0^∞ e^{-z cosh t} cosh(νt) dt` with the trapezoidal
/// rule, which converges geometrically for this analytic, rapidly decaying
/// integrand. Terms are accumulated in log space so the `z^ν` prefactor never
/// overflows for small `z`.
pub fn scaled_bessel_k(nu: f64, z: f64) -> f64 {
    debug_assert!(nu >= 0.0 && z > 0.0);
    if z > 745.0 {
        return 0.0;
    }
    let step = 0.05f64.min(0.25 / z.sqrt());
    let log_prefix = nu * z.ln();
    let log_term = |t: f64| {
        let lc = if nu == 0.0 { 0.0 } else { nu * t + (-2.0 * nu * t).exp().ln_1p() - std::f64::consts::LN_2 };
        log_prefix - z * t.cosh() + lc
    };
    // The integrand peaks where z sinh t = ν.
    let peak_t = (nu / z).asinh();
    let peak = log_term(peak_t);
    let mut sum = 0.5 * (log_term(0.0) - peak).exp();
    let mut k = 1usize;
    loop {
        let t = step * k as f64;
        let rel = log_term(t) - peak;
        sum += rel.exp();
        if t > peak_t && rel < -45.0 {
            break;
        }
        k += 1;
    }
    step * sum * peak.exp()
}

/// `K_ν(z)`.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    scaled_bessel_k(nu.abs(), z) / z.powf(nu.abs())
}

/// Normalized Matérn profile `2^{1-ν}/Γ(ν) · z^ν K_ν(z)`, equal to 1 at 0.
pub fn matern_profile(nu: f64, z: f64) -> f64 {
    let z = z.abs();
    if z < MATERN_SMALL_ARG {
        return 1.0;
    }
    (2.0f64.powf(1.0 - nu) / libm::tgamma(nu)) * scaled_bessel_k(nu, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn half_integer_closed_forms() {
        for &z in &[1e-6, 1e-3, 0.1, 0.5, 1.0, 3.7, 20.0, 150.0, 600.0] {
            let k12 = (PI / (2.0 * z)).sqrt() * (-z).exp();
            let k32 = k12 * (1.0 + 1.0 / z);
            let k52 = k12 * (1.0 + 3.0 / z + 3.0 / (z * z));
            for (nu, want) in [(0.5, k12), (1.5, k32), (2.5, k52)] {
                let got = bessel_k(nu, z);
                assert!((got - want).abs() <= 1e-13 * want, "K_{nu}({z}) = {got}, want {want}");
            }
        }
    }

    #[test]
    fn integer_orders_match_series_values() {
        // Reference values of K_0, K_1, K_2 at 1.
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-14);
        assert!((bessel_k(1.0, 1.0) - 0.601_907_230_197_234_6).abs() < 1e-14);
        assert!((bessel_k(2.0, 1.0) - 1.624_838_898_635_177_5).abs() < 1e-13);
    }

    #[test]
    fn recurrence_holds() {
        // K_{ν+1}(z) = K_{ν-1}(z) + (2ν/z) K_ν(z)
        for &nu in &[0.3, 1.0, 1.7, 2.0, 3.25] {
            for &z in &[0.05, 0.8, 4.0, 11.0] {
                let lhs = bessel_k(nu + 1.0, z);
                let rhs = bessel_k(nu - 1.0, z) + 2.0 * nu / z * bessel_k(nu, z);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs, "nu={nu} z={z}");
            }
        }
    }

    #[test]
    fn matern_profile_limits() {
        assert_eq!(matern_profile(2.0, 0.0), 1.0);
        for nu in [0.5, 1.0, 2.0, 3.5] {
            let near = matern_profile(nu, 1e-6);
            assert!((near - 1.0).abs() < 1e-5, "nu={nu}: {near}");
        }
        assert!((matern_profile(0.5, 1.3) - (-1.3f64).exp()).abs() < 1e-14);
        // ν=3/2: (1+z)e^{-z}
        assert!((matern_profile(1.5, 0.7) - 1.7 * (-0.7f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn matern_profile_rises_to_one() {
        let mut prev = 0.0;
        for k in 0..12 {
            let z = 10f64.powi(-k) * 3.0;
            let v = matern_profile(2.0, z);
            assert!(v <= 1.0 && v >= prev, "z={z}: {v}");
            prev = v;
        }
    }
}
