// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod dc;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod optim;
pub mod vsum;

pub use error::{Error, LoadError, Result};
