//! Scenario configuration, certification pipelines and report emission
//! for the `horizon-cert` command-line tool.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{
    run_bounds, run_certification, run_constants, run_simulations, CertificationReport, ReportRow,
    RunOptions,
};
pub use report::{emit_gamma, emit_reports, REPORT_HEADER};
