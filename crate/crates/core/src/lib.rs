//! Score (Rao / Lagrange multiplier), Wald and likelihood-ratio tests for
//! likelihood models, with sandwich-robust and locally-robust score tests,
//! spatial regression diagnostics, a sequential score test and a seeded Monte
//! Carlo harness.

// Negated comparisons are used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod linalg;
pub mod models;
pub mod montecarlo;
pub mod result;
pub mod robust;
pub mod sequential;
pub mod spatial;
pub mod trinity;

pub use error::{Error, Result};
pub use estimator::{fit_restricted, fit_unrestricted, initial_point, lagrange_multipliers, FitOptions, FitResult, Fits, Restriction};
pub use likelihood::{
    finite_diff_check, information, log_likelihood, score, score_bundle, Block, Dataset, InfoKind, Information,
    LikelihoodModel, ParamVector, ScoreBundle,
};
pub use montecarlo::{null_quantiles, run_mc, Dgp, McConfig, McReport, Statistic};
pub use result::{TestResult, Variant};
pub use sequential::{
    calibrate_boundary, compare_fixed_vs_sequential, run_sequential, CalibratedBoundary, SequentialDesign, SequentialOutcome,
    SequentialPlan,
};
pub use spatial::{SarFixture, SpatialWeights};
pub use trinity::{trinity, Direction};
