//! Experiment runner for `zakai-core`: reads a TOML experiment description,
//! validates it, dispatches to the core modules and writes CSV artifacts plus
//! a JSON manifest.

pub mod config;
pub mod run;

use std::path::Path;

use thiserror::Error;

pub use config::{Diagnostic, ExperimentConfig, Kind, Plan};
pub use run::{run, RunSummary, OUTPUT_ROOT_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit status: 1 for validation failures, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// Reads and validates a configuration file.
pub fn load(path: &Path) -> Result<(String, Plan), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Validation(vec![Diagnostic {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        }])
    })?;
    let plan = plan_from_str(&text)?;
    Ok((text, plan))
}

pub fn plan_from_str(text: &str) -> Result<Plan, CliError> {
    let config = config::parse(text).map_err(CliError::Validation)?;
    Plan::build(config).map_err(CliError::Validation)
}

/// Schema and assumption diagnostics for `path`; empty when the file is valid.
pub fn validate(path: &Path) -> Vec<Diagnostic> {
    match load(path) {
        Ok(_) => Vec::new(),
        Err(CliError::Validation(d)) => d,
        Err(e) => vec![Diagnostic {
            field: "config".into(),
            message: e.to_string(),
        }],
    }
}
