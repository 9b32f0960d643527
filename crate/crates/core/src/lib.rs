//! Mixture-distribution RUL prediction with recurrent networks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cli;
mod codec;
pub mod config;
pub mod dataset;
pub mod distribution;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod synthetic;
pub mod training;
pub mod tune;

pub use error::{Error, Result};
