//! Simultaneous transformation and rounding (STAR) models for count data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bart;
pub mod config;
pub mod data;
pub mod draws;
pub mod error;
pub mod fit;
pub mod harness;
pub mod linear_additive;
pub mod mcmc;
pub mod metrics;
pub mod normal;
pub mod rounding;
pub mod samplers;
pub mod spline;
pub mod transform;

pub use config::{BartConfig, FitConfig, Likelihood, McmcConfig, ModelKind};
pub use data::Dataset;
pub use error::{Result, StarError};
pub use fit::{fit, Fit};
