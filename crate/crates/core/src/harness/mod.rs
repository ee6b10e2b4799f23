//! Experiment orchestration shared by the command-line tool and tests.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod plot;

pub use config::ExperimentConfig;
