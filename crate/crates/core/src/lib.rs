//! Certified bounds on the loss from planning in an approximate MDP.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod inventory;
pub mod ipm;
pub mod lqr;
pub mod mdp;
pub mod mismatch;
pub mod suite;
pub mod weighting;

pub use error::{Error, Result};
