//! Echo-state networks trained with least-squares policy iteration, driving
//! many pedestrians on a periodic grid.
//!
//! The pieces fit together as follows:
//!
//! * [`esn`] builds sparse random reservoirs and evaluates per-action candidates.
//! * [`env`] holds the grid, local observations and simultaneous moves.
//! * [`lspi`] accumulates episode traces and solves for readout weights.
//! * [`runner`] plays trials end to end, with checkpoints.
//! * [`metrics`] turns logs into curves, colormaps and fundamental diagrams.
//! * [`cli`] backs the `esn-crowd` binary.

pub mod cli;
pub mod container;
pub mod env;
pub mod error;
pub mod esn;
pub mod lspi;
pub mod metrics;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
