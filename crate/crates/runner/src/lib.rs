//! Command-line orchestration for the annihilating–branching walk: TOML run
//! configurations, the subcommands, replica sweeps, run manifests and the
//! built-in self-test.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod init;
pub mod manifest;
pub mod selftest;
pub mod svg;
pub mod sweep;

pub use commands::{cmd_compare, cmd_eig, cmd_evolve, cmd_lattice, cmd_simulate, load_series, CompareSummary, Outcome};
pub use config::RunConfig;
pub use error::{Result, RunError};
pub use manifest::{RunManifest, RunStatus};
pub use selftest::run_selftest;
pub use sweep::{cmd_sweep, SweepReport};
