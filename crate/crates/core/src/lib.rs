//! Spatially-constrained robust mixture regression.
//!
//! Observations carry a response, predictors and 2-D coordinates. The fit
//! partitions them into `K` spatially compact regions, each with its own
//! linear regression, while flagging two kinds of outliers: rows far from
//! every regression line (Type 1) and rows whose regression fits one region
//! but whose location sits in another (Type 2).
//!
//! The modules:
//! - [`model`]: dataset, mixture model and likelihood primitives
//! - [`regression`]: OLS and least trimmed squares
//! - [`hmr`]: hybrid (regression + spatial) classification EM
//! - [`srmr`]: the robust outer loop, multi-start consensus and BIC selection of `K`
//! - [`inference`]: bootstrap significance of outlier sets
//! - [`simgen`]: synthetic benchmark scenarios
//! - [`metrics`]: RI, ARI, outlier accuracy, coefficient error
//! - [`io`]: CSV formats

pub mod error;
pub mod hmr;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod model;
pub mod regression;
pub mod rng;
pub mod simgen;
pub mod srmr;

pub use error::{Result, SrmrError};
pub use model::{Assignment, Component, FitResult, MixtureModel, SpatialDataset};
pub use srmr::{select_k, srmr_fit, SrmrConfig};
