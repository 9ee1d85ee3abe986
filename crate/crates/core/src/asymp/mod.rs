//! Asymptotic covariances and sequential rank tests.

pub mod cov;
pub mod hessian;
pub mod rank;

pub use cov::{
    c_covariances, estimate_v, fitted_params, information, projection_covariance, vrcl, VEstimate,
};
pub use hessian::psi_hessian;
pub use rank::{
    select_dimension, select_dimension_fit, select_dimension_fit_with, sequential_tests_with,
    test_rank_wald, test_rank_weighted, BranchReport, DimensionTestReport, RankStep, RankTest,
};
