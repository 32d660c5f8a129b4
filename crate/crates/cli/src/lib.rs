//! Command-line front end: data ingestion, configuration, orchestration of
//! fits and searches, simulation harnesses, and machine-readable results.

pub mod bundle;
pub mod commands;
pub mod io;
pub mod sim;
