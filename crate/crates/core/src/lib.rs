//! Expected-cost navigation planning on graphs whose connections may be
//! certain edges or probabilistic switches.
//!
//! The pipeline: load a [`model::UGraph`], expand the reachable decision DAG
//! with [`graph::build_representing_graph`], and run [`planner::solve`] for
//! the optimal conditional plan. [`oracle`] and [`simulator`] check plans by
//! exhaustive world enumeration and seeded Monte-Carlo runs.

pub mod cli;
pub mod error;
pub mod generator;
pub mod graph;
pub mod model;
pub mod num;
pub mod oracle;
pub mod planner;
pub mod rng;
pub mod simulator;
pub mod testing;
pub mod transitions;

pub use error::{Error, Result};
