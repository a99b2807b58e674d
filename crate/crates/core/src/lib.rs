//! Fundamental price-earnings estimation with a three-layer dynamic Bayesian
//! network.
//!
//! The observed log price-earnings ratio `y_t = ln(P_t / E_t)` is modeled as
//!
//! ```text
//! y_t = ln(PE* (1 + z_t)) + eps_t,   eps_t ~ N(0, sigma^2)
//! ```
//!
//! where `PE*` is a static fundamental multiple on a discrete grid and `z_t`
//! is a Markov chain of medium-term mispricing levels. The crate provides
//! exact scaled filtering and smoothing ([`inference`]), MAP parameter
//! estimation by EM under Dirichlet priors ([`learning`]), price/earnings
//! ingestion ([`market_data`]), the PE-band trading strategies with a
//! buy-and-hold benchmark ([`trading`]) and bootstrap portfolio evaluation
//! ([`portfolio`]).

pub mod error;
pub mod inference;
pub mod learning;
pub mod market_data;
pub mod model;
pub mod portfolio;
pub mod trading;

pub use error::{Error, Result};
pub use model::{ModelParams, ObservationSeries, StateGrids};
