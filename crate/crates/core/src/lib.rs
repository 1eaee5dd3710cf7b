//! Simulation and numerical verification of large-deviation behaviour in
//! super-critical marked-Poisson SINR networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`] generates powered Poisson points and applies the SINR connection rule.
//! - [`connectivity`] evaluates the pair kernel and the connection probability `Q`.
//! - [`empirical`] bins `W = D x (0, inf)` and builds the measures `U1`, `U2`.
//! - [`rates`] holds the entropy and rate functionals.
//! - [`inference`] covers likelihoods, tilted samplers and rare-event estimators.
//! - [`oracle`] enumerates every edge set of tiny instances exactly.
//! - [`experiments`] runs configured experiments and persists reports.

// NaN must fail validation, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connectivity;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod rates;
pub mod report;
pub mod seed;

pub use error::{Error, Result};
