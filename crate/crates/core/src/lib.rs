//! Batch-sampling load balancing over MDS-coded storage: an exact simulator of
//! the n-server empirical-measure chain, its mean-field ODE limit, the
//! Gaussian diffusion that describes fluctuations around that limit, and
//! the experiments that measure how well the diffusion predicts the finite
//! system.

pub mod covariance;
pub mod cli;
pub mod ctmc;
pub mod diffusion;
pub mod drift;
pub mod error;
pub mod experiments;
pub mod export;
pub mod fluid;
pub mod linalg;
pub mod rates;
pub mod seeding;
pub mod types;
pub mod validation;

pub use error::{Error, Result};
pub use types::{Code, CountVector, CovMatrix, FluctuationVector, QueuePmf, SystemParams, TruncationConfig};

// lets the example programs, which name the crate, compile as unit tests
#[cfg(test)]
extern crate self as codedlb;

#[cfg(test)]
mod example_runs;

#[cfg(test)]
mod properties;
