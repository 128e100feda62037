//! Deterministic numerical primitives.

pub mod finite_diff;
pub mod linalg;
pub mod optimize;
pub mod quadrature;
pub mod special;

pub use finite_diff::{hessian_fd, HessianEstimate, DEFAULT_HESSIAN_STEP};
pub use linalg::{cholesky, spd_inverse, spectral_norm, sym_eig_max, sym_eigenvalues, Matrix};
pub use optimize::{maximize_scalar, maximize_scalar_with_grid, ScalarMaxResult, DEFAULT_GRID_POINTS};
pub use quadrature::{
    expectation_2d, expectation_2d_detailed, gauss_hermite, gauss_legendre, Expectation, MeasureTag,
    Panels, PiecewiseExpectation, QuadratureRule, DEFAULT_ORDERS,
};
