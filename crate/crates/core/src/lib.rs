// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod bpsk;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod network;
pub mod probe;
pub mod rng;
pub mod round;
pub mod solver;

pub use error::{Error, Result};
