//! Command-line plumbing for `sbm-sampling`: network files, the `fit` and
//! `select` commands, and the simulation-study runner.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod io;

pub use commands::{fit_command, parse_design, select_command, selection_icl, FitRecord, SelectionTable};
pub use error::{HarnessError, Result};
pub use experiment::{read_rows, run_experiment, write_rows, ExperimentConfig, ExperimentRow, Topology};
pub use io::{load_network, save_network, threshold_weighted, NetworkFormat};
