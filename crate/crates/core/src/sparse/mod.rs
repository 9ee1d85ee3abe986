//! Simultaneous variable selection and reduction by group-penalized factorization.

pub mod cv;
pub mod penalty;
pub mod predictor;
pub mod solver;

pub use cv::{
    cv_select, fold_assignment, penalized_reduction, selected_by_roles, selected_variables,
    CvGrids, PathPoint, RegPath, SkippedFold,
};
pub use penalty::{PenaltyKind, PenaltySpec, ProxWorkspace, RowRole};
pub use predictor::{auc, fit_linear, fit_logistic, Downstream, LinearModel, LogisticModel};
pub use solver::{
    lambda_max, orthonormalize, solve_penalized, PenalizedProblem, PenalizedSolution, SolverOptions,
};
