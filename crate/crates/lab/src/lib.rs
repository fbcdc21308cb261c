//! Experiment orchestration for flowldp: Monte Carlo rare-event sweeps,
//! fits of `ε ln p̂` against ε, comparison with variational rate
//! predictions, and the `ldp_lab` command line.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod manifest;
pub mod prediction;
pub mod report;
pub mod sweep;

pub use config::{Event, ExperimentConfig, Simulator};
pub use experiment::{run_experiment, ExperimentOutput};
pub use prediction::{predict, Prediction};
pub use report::{ldp_report, LdpReport, SweepRow};
pub use sweep::mc_rare_event;
