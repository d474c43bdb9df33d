//! Experiment harness for the `rrr` library: synthetic data generation,
//! accuracy and bound sweeps, transfer-operator spectrum estimation, wall-time
//! benchmarks, and SVG chart rendering, all behind a deterministic CLI.
//!
//! Reruns with the same configuration and seed produce byte-identical CSV
//! files except for the wall-time columns.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod koopman;
pub mod plot;
pub mod rows;
pub mod synth;
pub mod timing;
