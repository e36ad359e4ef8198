//! Ensemble filtering through optimal-transport resampling, with variants
//! that enforce nonlinear equality constraints on the state.
//!
//! The crate is organized bottom-up:
//!
//! - [`ensemble`]: equally weighted sample sets and their statistics.
//! - [`transport`]: the transport linear program and the resampling map.
//! - [`models`]: pendulum dynamics, integration, measurements, likelihoods.
//! - [`filters`]: the five filter variants and the per-step pipeline.
//! - [`sampling`]: transport-based sampling of target densities.
//! - [`harness`]: configuration, Monte-Carlo experiments and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod filters;
pub mod harness;
pub mod models;
pub mod sampling;
pub mod transport;

pub use error::{Error, Result};
