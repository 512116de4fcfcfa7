//! Simulation toolkit for incentive-driven bitrate reduction in video streaming.
//!
//! Users trade a high bitrate for a lower one in exchange for an incentive.
//! Each has a minimum acceptable incentive derived from a logarithmic MOS
//! curve, and accepts offers with a sigmoid probability around it. A provider
//! scores offer policies by expected flexibility (kbps saved) per unit of
//! expected cost.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod altruism;
pub mod config;
pub mod distribution;
pub mod education;
pub mod error;
pub mod learning;
pub mod model;
pub mod policy;
pub mod population;
pub mod scenario;
pub mod stream;

pub use error::{ModelError, Result};
