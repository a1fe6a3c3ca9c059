//! Single-view SDF reconstruction: B-spline KAN decoder, category prototype
//! priors fused by attention, synthetic data, meshing and metrics.

// `!(a > b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod decoder;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod kan;
pub mod metrics;
pub mod numcore;
pub mod pipeline;
pub mod prior;
pub mod spline;

pub use error::{Error, Result};
