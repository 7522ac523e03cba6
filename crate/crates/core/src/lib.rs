//! Belief-state dynamic programming for adaptive sensing and transmission
//! durations in opportunistic spectrum access.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod config;
pub mod error;
pub mod experiments;
pub mod reward;
pub mod sensing;
pub mod sim;
pub mod solver;
pub mod traffic;

pub use error::{Error, Result};
