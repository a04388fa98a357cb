//! Semiparametric sieve estimation of linear random-coefficient models whose
//! slopes are correlated with continuous regressors.
//!
//! The model `Y = α + X β_i + η` with `E[β_i | X] = β + b(X)` is rewritten as a
//! semi-varying coefficient regression
//!
//! ```text
//! Y_i = W_i δ + X_i b*(X_i) + U_i
//! ```
//!
//! where `W_i` collects a constant, the regressors and their pairwise
//! interactions, and the additive functional coefficients `b*` are
//! approximated with constrained polynomial or B-spline sieves. The
//! parametric part is estimated by profile least squares with a
//! heteroskedasticity-robust sandwich covariance.
//!
//! Module map:
//!
//! * [`basis`]: raw and constrained sieve bases and the sieve regressor block.
//! * [`design`]: the parametric block `W`, optional controls and the bundled design.
//! * [`estimator`]: profile least squares, function evaluation, sandwich covariance.
//! * [`selection`]: cross-validated order choice and wild-bootstrap bands.
//! * [`comparators`]: OLS and control-function reference estimators.
//! * [`montecarlo`]: simulation designs, samplers and replication studies.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod comparators;
pub mod design;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod selection;

pub use basis::{
    BasisFamily, BasisSpec, BlockKind, BlockLayout, ConstrainedBasis, ConstraintSet, Domain,
    SieveBases, SieveBlock,
};
pub use comparators::{ComparatorFit, ComparatorMethod};
pub use design::{DesignMatrices, SampleData, SieveModel};
pub use error::{Error, Result};
pub use estimator::{EvalGrid, FitResult, FunctionEstimate, ProfileSolver, SandwichPieces};
pub use exec::Execution;
pub use selection::{BootstrapBands, CvReport, FoldScheme, WeightLaw};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
