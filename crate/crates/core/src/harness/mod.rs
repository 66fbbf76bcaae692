//! Experiment orchestration: payoffs, configuration, the end-to-end run and
//! the files it writes.
//!
//! A run simulates paths under the physical measure, splits them by index
//! prefix (training first), samples one neuron bank at the largest order and
//! fits every requested order on a column prefix of it. Test-set predictions,
//! learned hedges and, when an oracle exists, the integrated squared hedge
//! error are collected into a [`FitReport`].

pub mod checks;
pub mod config;
pub mod payoff;
pub mod presets;
pub mod report;
pub mod run;

pub use checks::{run_oracle_checks, CheckLine};
pub use config::{write_path_files, ExperimentConfig, OracleSettings, PathFileMeta, Seeds, SimulationConfig};
pub use payoff::{evaluate_payoff, running_average, PayoffSpec};
pub use presets::{preset, Preset};
pub use report::{emit_results, ExperimentOutput, FitReport, HedgeRow, OrderReport, ScatterRow};
pub use run::{reference_hedge, run_experiment, thinned_nodes};
