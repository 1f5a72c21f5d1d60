//! Opinion dynamics under budgeted short- and long-term incentives.
//!
//! The crate covers the Friedkin-Johnsen style model with a memory trace of
//! long-term incentives, its equilibria and terminal-cost certificate, a
//! dense ADMM quadratic-program solver, the naive and receding-horizon
//! incentive designers, and a seeded experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod budget;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod policy;
pub mod qp;

pub use error::{Error, Result};
