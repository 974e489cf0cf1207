//! Command-line front end for the Helmholtz solver: configuration, model
//! problem setup, and the `solve`, `sweep`, `spectrum` and `bench` runs.

pub mod config;
pub mod problem;
pub mod run;

pub use config::{KSpec, PrecondMode, ProblemConfig, RhsSpec, SmootherChoice};
pub use run::{run_bench, run_solve, run_spectrum, run_sweep, solve, RunReport};
