//! Maximum-likelihood fitting and reduction extraction.

pub mod continuous;
pub mod ising_fit;
pub mod reduction;

pub use continuous::{fit_continuous_design, ContinuousFit};
pub use ising_fit::{fit_ising_design, IsingFit};
pub use reduction::{
    apply_reduction, fit_mle, fit_sdr, fit_sdr_with, reduce_dataset, reduction_from_fit,
    resolve_kind, svd_truncate, Dims, FitOptions, MleFit, ReductionKind, ReductionModel, SvdParts,
};

use crate::data::Dataset;
use crate::error::Result;
use crate::model::FyBasis;

pub fn fit_continuous(data: &Dataset, fy: &FyBasis) -> Result<ContinuousFit> {
    fit_continuous_design(&data.x, &data.h, &fy.design(&data.y)?, false)
}

pub fn fit_ising(data: &Dataset, fy: &FyBasis) -> Result<IsingFit> {
    fit_ising_design(&data.h, &fy.design(&data.y)?)
}
