//! Probabilistic model for `(X, H) | Y`.

pub mod fy;
pub mod ising;
pub mod params;
pub mod stats;

pub use fy::{FyBasis, FyKind, FySpec};
pub use ising::{ising_pmf, ising_sample, IsingTable};
pub use params::{
    decode_eta, log_density, natural_params, psi, suff_stat, EtaLayout, LogDensity,
    MixedModelParams, NaturalParams, ThetaLayout,
};
pub use stats::{stat_s, stat_t, stat_w};
