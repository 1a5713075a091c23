//! Command implementations behind the `relaysec` binary.
//!
//! Each command validates its configuration, computes its result, and renders
//! it as CSV or JSON text. Writing is left to [`write_output`] so that a single
//! writer emits the merged result.

pub mod config;
pub mod scan;
pub mod simulate;
pub mod verify;

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use config::{OutputFormat, Overrides, RunConfig};
pub use scan::{cmd_scan, ScanRow};
pub use simulate::{cmd_simulate, SimulateRow};
pub use verify::{cmd_verify, CheckRecord, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

/// Rendered output of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub text: String,
    pub exit_code: i32,
}

/// CSV text with `#`-prefixed metadata lines before the header row.
pub fn render_csv<T: Serialize>(command: &str, cfg: &RunConfig, rows: &[T]) -> Result<String, CliError> {
    let mut text = format!(
        "# relaysec {command}\n# seed: {}\n# config: {}\n",
        cfg.seed,
        serde_json::to_string(&cfg.provenance())?
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
    text.push_str(&String::from_utf8(bytes).map_err(|e| CliError::Run(e.to_string()))?);
    Ok(text)
}

/// Pretty JSON with the same metadata as the CSV header.
pub fn render_json<T: Serialize>(command: &str, cfg: &RunConfig, body: &T) -> Result<String, CliError> {
    let value = serde_json::json!({
        "command": command,
        "seed": cfg.seed,
        "config": cfg.provenance(),
        "result": body,
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Writes to `out`, or stdout when absent.
pub fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}
