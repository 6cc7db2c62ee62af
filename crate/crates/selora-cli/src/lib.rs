//! Command-line front end for the spectral-encoding low-rank adaptation
//! library: configuration parsing, run orchestration, checkpoint
//! serialization, metrics export, and the property-check battery.

pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod error;
pub mod metrics;
pub mod runner;
