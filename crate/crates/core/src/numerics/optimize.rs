use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Coarse-grid size used by [`maximize_scalar`].
pub const DEFAULT_GRID_POINTS: usize = 512;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMaxResult {
    pub argmax: f64,
    pub max_value: f64,
    pub evaluations: usize,
    /// Grid cell that golden-section refinement searched.
    pub bracket: (f64, f64),
}

/// Maximizes `g` on `[lo, hi]`: a 512-point grid scan followed by
/// golden-section refinement around the best grid cell.
///
/// Ties keep the smallest grid argmax; the refined point only replaces it
/// when strictly larger.
pub fn maximize_scalar<G>(g: G, domain: (f64, f64), tol: f64) -> Result<ScalarMaxResult>
where
    G: Fn(f64) -> f64 + Sync,
{
    maximize_scalar_with_grid(g, domain, tol, DEFAULT_GRID_POINTS)
}

pub fn maximize_scalar_with_grid<G>(
    g: G,
    domain: (f64, f64),
    tol: f64,
    grid_points: usize,
) -> Result<ScalarMaxResult>
where
    G: Fn(f64) -> f64 + Sync,
{
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(invalid(format!("search domain [{lo}, {hi}] is not a finite interval")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    if grid_points < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    let eval = |x: f64| -> Result<f64> {
        let v = g(x);
        if v.is_nan() {
            Err(Error::EvaluationFailure(format!("objective returned NaN at {x}")))
        } else {
            Ok(v)
        }
    };
    if lo == hi {
        let v = eval(lo)?;
        return Ok(ScalarMaxResult { argmax: lo, max_value: v, evaluations: 1, bracket: (lo, hi) });
    }

    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid_at = |i: usize| if i + 1 == grid_points { hi } else { lo + step * i as f64 };
    let values: Vec<f64> = (0..grid_points)
        .into_par_iter()
        .map(|i| eval(grid_at(i)))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let mut evaluations = grid_points;
    let bracket = (grid_at(best.saturating_sub(1)), grid_at((best + 1).min(grid_points - 1)));

    // Golden-section search inside the bracket.
    let (mut a, mut b) = bracket;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    evaluations += 2;
    let mut refined = if fc >= fd { (c, fc) } else { (d, fd) };
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
            evaluations += 1;
            if fc > refined.1 {
                refined = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
            evaluations += 1;
            if fd > refined.1 {
                refined = (d, fd);
            }
        }
    }

    let (argmax, max_value) = if refined.1 > values[best] {
        refined
    } else {
        (grid_at(best), values[best])
    };
    Ok(ScalarMaxResult { argmax, max_value, evaluations, bracket })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let r = maximize_scalar(|r| -(r - 1.0) * (r - 1.0), (0.0, 10.0), 1e-9).unwrap();
        assert!((r.argmax - 1.0).abs() <= 1e-9);
        assert!(r.max_value.abs() < 1e-15);
    }

    #[test]
    fn constant_ties_to_first_point() {
        let r = maximize_scalar(|_| 3.5, (2.0, 7.0), 1e-6).unwrap();
        assert_eq!(r.argmax, 2.0);
        assert_eq!(r.max_value, 3.5);
    }

    #[test]
    fn r_exp_minus_r() {
        let r = maximize_scalar(|r| r * (-r).exp(), (0.0, 10.0), 1e-8).unwrap();
        assert!((r.argmax - 1.0).abs() < 1e-6);
        assert!((r.max_value - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn nan_is_an_evaluation_failure() {
        let err = maximize_scalar(|r| if r > 5.0 { f64::NAN } else { r }, (0.0, 10.0), 1e-6);
        assert!(matches!(err, Err(Error::EvaluationFailure(_))));
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(maximize_scalar(|r| r, (1.0, 0.0), 1e-6).is_err());
        assert!(maximize_scalar(|r| r, (0.0, f64::INFINITY), 1e-6).is_err());
        assert!(maximize_scalar(|r| r, (0.0, 1.0), 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn dominates_endpoints_and_stays_inside(
            center in -5.0f64..5.0, width in 0.1f64..3.0, lo in -10.0f64..0.0, len in 0.5f64..20.0,
        ) {
            let hi = lo + len;
            let g = |r: f64| (-(r - center).powi(2) / width).exp() + 0.01 * r.sin();
            let res = maximize_scalar(g, (lo, hi), 1e-8).unwrap();
            proptest::prop_assert!(res.argmax >= lo && res.argmax <= hi);
            proptest::prop_assert!(res.max_value >= g(lo) && res.max_value >= g(hi));
        }
    }
}
