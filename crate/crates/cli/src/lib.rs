//! Command line and HTTP service for drug-combination dose finding.

pub mod api;
pub mod cli;
pub mod error;
pub mod store;
pub mod wire;
