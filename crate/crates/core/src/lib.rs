//! Simulators and estimators for randomized experiments under unknown
//! network interference.
//!
//! The crate generates panel outcomes from Gaussian-interference and
//! graph-based scenarios, forecasts outcome means with a one-dimensional
//! state evolution, estimates the total treatment effect (TTE) over the
//! horizon and at equilibrium, attaches resampling confidence intervals, and
//! checks estimates against counterfactual twin simulations.

pub mod dgp;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod inference;
pub mod model;
pub mod rng;
pub mod scenarios;
pub mod simulation;
pub mod state_evolution;

pub use error::{Error, Result};
