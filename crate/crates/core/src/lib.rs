//! Distributed stochastic approximation with Age-of-Information delays.

pub mod analysis;
pub mod aoi;
pub mod apps;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
