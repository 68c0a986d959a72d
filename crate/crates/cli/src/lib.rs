//! Command-line front end: CSV ingestion, subcommand dispatch and report output.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod report;
pub mod selftest;

use std::io::Write;

pub use args::{Command, Format, RunConfig};
pub use error::{CliError, CliResult};
pub use ingest::ingest_csv;
pub use report::Report;

impl Report {
    /// Reason the run should exit nonzero even though a report was produced.
    pub fn failure(&self) -> Option<String> {
        match &self.details {
            Some(report::Details::MonteCarlo { reports }) => reports.iter().find(|r| !r.failure_check_passed()).map(|r| {
                format!("{}: {} of {} replications failed, above the 1% limit", r.config.dgp, r.failures, r.config.reps)
            }),
            Some(report::Details::Selftest { checks }) => {
                let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                (!failed.is_empty()).then(|| format!("identity checks failed: {}", failed.join("; ")))
            }
            _ => None,
        }
    }
}

/// Run a parsed configuration and write its report.
pub fn execute(config: &RunConfig) -> CliResult<()> {
    let report = commands::run(config)?;
    let text = report.render(config.format);
    match &config.output {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output { path: path.clone(), source })?,
        None => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
        }
    }
    match report.failure() {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(()),
    }
}
