use crate::error::{invalid, Result};
use crate::numerics::linalg::Matrix;

/// Default step for [`hessian_fd`].
pub const DEFAULT_HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    /// Richardson-extrapolated Hessian at the origin.
    pub matrix: Matrix,
    /// Largest entrywise change between the `h` and `h/2` stencils, divided by 3.
    pub error_estimate: f64,
}

fn stencil<K: Fn(&[f64]) -> f64>(kappa: &K, d: usize, h: f64) -> Matrix {
    let mut point = vec![0.0; d];
    let mut at = |entries: &[(usize, f64)]| {
        point.iter_mut().for_each(|p| *p = 0.0);
        for &(i, v) in entries {
            point[i] += v;
        }
        kappa(&point)
    };
    let center = at(&[]);
    let mut hess = Matrix::zeros(d, d);
    for i in 0..d {
        hess[(i, i)] = (at(&[(i, h)]) - 2.0 * center + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Central-difference Hessian of `kappa` at the origin of `R^d`, with one
/// Richardson step from `h` and `h/2`.
pub fn hessian_fd<K>(kappa: K, d: usize, h: f64) -> Result<HessianEstimate>
where
    K: Fn(&[f64]) -> f64,
{
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    let coarse = stencil(&kappa, d, h);
    let fine = stencil(&kappa, d, 0.5 * h);
    let mut matrix = Matrix::zeros(d, d);
    let mut error_estimate = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let diff = fine[(i, j)] - coarse[(i, j)];
            matrix[(i, j)] = fine[(i, j)] + diff / 3.0;
            error_estimate = error_estimate.max(diff.abs() / 3.0);
        }
    }
    Ok(HessianEstimate { matrix: matrix.symmetrized(), error_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn negative_squared_norm() {
        let est = hessian_fd(|x| -x.iter().map(|v| v * v).sum::<f64>(), 2, DEFAULT_HESSIAN_STEP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { -2.0 } else { 0.0 };
                assert!((est.matrix[(i, j)] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gaussian_bump() {
        let est = hessian_fd(|x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(), 2, 1e-4).unwrap();
        assert!((est.matrix[(0, 0)] + 1.0).abs() < 1e-4);
        assert!((est.matrix[(1, 1)] + 1.0).abs() < 1e-4);
        assert!(est.matrix[(0, 1)].abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(hessian_fd(|_| 0.0, 0, 1e-4).is_err());
        assert!(hessian_fd(|_| 0.0, 2, 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn recovers_quadratic_forms(seed in 0u64..500, d in 1usize..5) {
            let mut rng = StreamKey::from_seed(seed).rng();
            let mut a = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..=i {
                    let v = rng.uniform_range(-2.0, 2.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            let h = DEFAULT_HESSIAN_STEP;
            let quad = |x: &[f64]| -0.5 * x.iter().zip(a.mat_vec(x)).map(|(p, q)| p * q).sum::<f64>();
            let est = hessian_fd(quad, d, h).unwrap();
            for i in 0..d {
                for j in 0..d {
                    proptest::prop_assert!((est.matrix[(i, j)] + a[(i, j)]).abs() <= 10.0 * h);
                }
            }
        }
    }
}
