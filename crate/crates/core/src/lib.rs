//! Simulator for Byzantine-robust distributed optimization where the server
//! scores worker updates against a small trusted trial set.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod attacks;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod trial;

pub use error::{Error, Result};
