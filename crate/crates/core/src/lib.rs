//! Stationary solutions of subordinator-driven stochastic delay differential
//! equations and CARMA processes: existence checks, non-negativity
//! certificates, moving-average kernels and path simulation.

pub mod carma;
pub mod cli;
pub mod characteristic;
pub mod csv;
pub mod error;
pub mod kernel;
pub mod levy;
pub mod measure;
pub mod multivar;
pub mod polynomial;
pub mod simulate;

pub use error::{Error, Result};
