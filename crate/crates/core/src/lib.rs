//! Quality screening when the buyer chooses what to learn.
//!
//! The crate covers the buyer's information-acquisition problem as a linear program over
//! mean-preserving contractions of a prior, the seller's cost-canceling mechanisms, a seller
//! search built on both, and numerical checks of the resulting outcome.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod buyer;
pub mod costs;
pub mod dist;
pub mod error;
pub mod example;
pub mod ficc;
pub mod lp;
pub mod mechanism;
pub mod seller;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits so that CSV output round-trips exactly.
pub fn fmt_num(x: f64) -> String {
    format!("{:.16e}", x)
}
