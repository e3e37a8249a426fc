//! Local correlation model: local-vol calibration of an index and its
//! constituents, Gaussian-copula basket decoding, and Monte Carlo pricing
//! with a state-dependent correlation matrix that reprices the index smile.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod copula;
pub mod corrfam;
pub mod dupire;
pub mod error;
pub mod lcm;
pub mod marketdata;
pub mod math;
pub mod synth;

pub use error::{Error, Result};
