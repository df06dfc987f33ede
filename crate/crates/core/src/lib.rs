//! Search-query surveillance models for tracking disease activity.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elastic_net;
pub mod error;
pub mod forecast;
pub mod gp;
pub mod impact;
pub mod ingest;
mod linalg;
pub mod news;
pub mod synthetic;
pub mod timeseries;
pub mod transfer;
pub mod unsupervised;

pub use error::{Error, Result};
pub use timeseries::{LagCorrelation, NormalizationParams, TimeSeries};
