pub mod asymp;
pub mod data;
pub mod error;
pub mod estim;
pub mod matops;
pub mod model;
pub mod simbench;
pub mod sparse;

pub use data::{Dataset, Response};
pub use error::{Error, Result};
