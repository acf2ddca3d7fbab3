//! Numerical laboratory for the Gaussian Orthogonal Ensemble: invariant
//! Gaussian ensembles on Sym(R^m), spectral and discriminant measures of the
//! quadratic field ½(Ax, x) on spheres, Gaussian regression, the Kac–Rice
//! count of critical values, and the Mehta integral.
//!
//! Every Monte Carlo estimator takes a [`Seed`] and an [`Exec`]; results are
//! a deterministic function of the seed and sample count.

pub mod acceptance;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod mehta;
pub mod quadrature;
pub mod regression;
pub mod special;
pub mod spectral;
pub mod spherefield;
pub mod stats;
pub mod symspace;

pub use error::{Error, Result};
pub use exec::{Exec, Seed};
pub use stats::EstimatorResult;
pub use symspace::{EnsembleParams, SymMatrix};
