//! Monte Carlo designs, samplers and replication studies.

pub mod designs;
pub mod quadrature;
pub mod study;
pub mod truncnorm;

pub use designs::{
    generate, synthetic_empirical, truth, DesignId, SimDataset, SimDesign, TruthSpec,
};
pub use study::{run_study, EstimatorSpec, MethodSummary, ParamSummary, RepSummary, StudyConfig};
pub use truncnorm::{sample_truncnorm, sample_truncnorm_bivariate, TruncatedNormal};
