//! Limiting spectral densities of central and non-central correlated
//! Wishart ensembles, separated-eigenvalue positions, and Monte-Carlo
//! validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closedform;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod outliers;
pub mod pastur;

pub use error::{Error, Result};
