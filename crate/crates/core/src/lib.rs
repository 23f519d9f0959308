// Negated float comparisons are deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod continuation;
pub mod coupled;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lichnerowicz;
pub mod momentum;
pub mod parallel;
pub mod reconstruction;
pub mod seed;
pub mod sobolev;

pub use error::{Error, Result};
