//! Numerical laboratory for linear (multi)fractional stable sheets.
//!
//! The crate synthesizes moving-average stable fields over a discretized
//! stable random measure, estimates local times from occupation measures,
//! decides the existence condition for local times, and numerically checks
//! the increment, integral and moment bounds the construction rests on.

pub mod error;
pub mod existence;
pub mod field;
pub mod fit;
pub mod hurst;
pub mod kernel;
pub mod lemmas;
pub mod local_time;
pub mod quad;
pub mod rng;
pub mod stable;

pub use error::{CoreError, Result};
