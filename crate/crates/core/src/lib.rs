//! Two-group Gaussian model of dominant and silent features.
//!
//! Closed-form 0-1 risks of suppressed featurizers, Monte-Carlo oracles for
//! them, gradient training of a linear featurizer plus head (ERM, linear
//! probing, LP-FT), dense weight averaging and an experiment harness.

pub mod domain;
mod error;
pub mod exec;
pub mod harness;
pub mod monte_carlo;
pub mod risk;
pub mod rng;
pub mod suppression;
pub mod swad;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Execution;
