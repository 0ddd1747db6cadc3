//! Particle (cell-average) approximation of two-dimensional initial data for
//! systems of conservation laws, together with the machinery needed to check
//! the weak-form convergence estimates of that construction numerically.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`] – scalar fields on the plane, rectangles, norm metadata and
//!   sampled-norm estimators.
//! * [`quadrature`] – composite tensor Gauss-Legendre integration that honours
//!   declared discontinuities; the measuring stick for everything else.
//! * [`discretize`] – grids, cell averages, piecewise-constant density and
//!   quantity fields, weak errors and the structural decomposition identities.
//! * [`bounds`] – the closed-form constants and right-hand sides of the four
//!   convergence estimates.
//! * [`truncation`] – choice of the truncation half-width for densities
//!   without compact support.
//! * [`harness`] – N-sweeps, bound verification and empirical order fits.
//! * [`builtins`] and [`io`] – the analytic field library, file formats,
//!   study configuration and CSV reports.
//! * [`cli`] – the `partapprox` command-line front end.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod builtins;
pub mod cli;
pub mod discretize;
pub mod fields;
pub mod harness;
pub mod io;
pub mod quadrature;
pub mod truncation;

pub use bounds::{theorem_bound, BoundInputs, BoundReport, TheoremId, Variant};
pub use discretize::{
    build_density_approx, build_quantity_approx, cell_averages, make_grid, weak_error_density, weak_error_quantity,
    weak_integral, CellMatrix, FieldKind, Grid, PiecewiseConstantField,
};
pub use fields::{BoxDomain, Circle, NormData, ScalarField};
pub use harness::{run_study, ConvergenceRecord, OrderEstimate, StudyCase, StudyOutcome};
pub use quadrature::{integrate_box, QuadratureSpec};
pub use truncation::{find_truncation_l, TruncationResult};
