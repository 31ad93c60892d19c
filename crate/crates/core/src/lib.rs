//! Instrumental-variables quantile regression.
//!
//! - [`qr`]: exogenous quantile regression and its sandwich covariance.
//! - [`ivqr`]: inverse quantile regression, Wald profiles and robust regions.
//! - [`ident`]: identification diagnostics for discrete treatments and instruments.
//! - [`dgp`]: seeded structural simulation designs with known truth.

pub mod data;
pub mod dgp;
pub mod error;
pub mod ident;
pub mod ivqr;
pub mod qr;
pub mod stats;

pub use data::{ColumnRoles, QuantileDataset};
pub use error::{Error, Result};
