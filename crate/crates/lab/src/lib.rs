//! Experiment runner around `sawtooth-core`: spec files and sweeps, CSV, JSON
//! and SVG artifacts, and the subcommands behind the `sawtooth` binary.

pub mod artifacts;
pub mod commands;
pub mod error;
pub mod float;
pub mod kv;
pub mod runner;
pub mod spec;
pub mod svg;

pub use error::{LabError, Result};
