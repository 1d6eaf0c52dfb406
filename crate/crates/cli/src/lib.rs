//! Dataset ingestion, experiment configuration and result emission for the
//! `spsd` command-line tool.

pub mod config;
pub mod io;
pub mod record;
pub mod run;

pub use config::ExperimentConfig;
pub use record::ResultRecord;
pub use run::{run, RunError};
