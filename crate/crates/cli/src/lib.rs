//! Experiment harness for quasi-Bayesian NMF: synthetic data, matrix I/O,
//! single fits, `b` sweeps and bound evaluation.

pub mod error;
pub mod fit;
pub mod io;
pub mod run;
pub mod sweep;
pub mod synthetic;

pub use error::{CliError, CliResult};
pub use fit::{fit, Algorithm};
pub use io::{load_matrix, save_matrix};
pub use run::{execute, run_experiment, Command, RunConfig};
pub use sweep::{sweep_b, SweepConfig, SweepRecord, SweepReport};
pub use synthetic::{generate_synthetic, NoiseKind, SyntheticData, SyntheticSpec};
