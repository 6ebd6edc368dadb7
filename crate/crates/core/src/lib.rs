//! Self-normalized importance sampling for Bayesian inverse problems, with
//! the second-moment diagnostics that control its error.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod math;
pub mod model;
pub mod reference;
pub mod sampler;
pub mod selftest;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
