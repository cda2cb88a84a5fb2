//! JSON run reports and the exit-code table.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | OK |
//! | 1 | FAIL: no acceptable answer (infeasible at this degree, low quality, rectangle stalled) |
//! | 2 | usage error (from clap) |
//! | 3 | I/O error |
//! | 4 | malformed input: parse, dimension or validity errors |
//! | 5 | non-certifying pipeline limit: iteration, round, retry or degree budget |
//! | 6 | numerical failure or violated internal contract |

use std::path::Path;
use std::process::ExitCode;

use rankone::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Effective;
use crate::Common;

pub const SCHEMA: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Format(String),
    Lib(Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 3,
            CliError::Format(_) => 4,
            CliError::Lib(e) => match e {
                Error::Parse { .. }
                | Error::BadDims(_)
                | Error::IllFormed(_)
                | Error::DimensionMismatch { .. }
                | Error::NotSymmetric { .. }
                | Error::EmptySubspace
                | Error::ZeroCandidate
                | Error::EmptySet
                | Error::BadWeights(_)
                | Error::PreconditionViolated(_) => 4,
                Error::SolverIterLimit { .. }
                | Error::DegreeExhausted { .. }
                | Error::RetryExhausted { .. }
                | Error::IterLimit { .. }
                | Error::MaxRounds { .. }
                | Error::Emptied
                | Error::DegreeExceeded { .. }
                | Error::DegreeTooSmall(_) => 5,
                _ => 6,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Format(_) => "format",
            CliError::Lib(_) => "pipeline",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(s) | CliError::Format(s) => s.clone(),
            CliError::Lib(e) => format!("{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "FAIL")]
    Fail,
}

/// What a command hands back for reporting.
pub struct Outcome {
    pub command: &'static str,
    pub config: Effective,
    pub status: Status,
    pub result: Value,
    pub checks: Value,
    pub timing_ms: Option<f64>,
}

pub type CmdResult = (Option<Effective>, &'static str, Result<Outcome, CliError>);

fn write_out(text: &str, common: &Common, to_file: bool) -> Result<(), CliError> {
    match (&common.out, to_file) {
        (Some(p), true) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes the report (to --out for report-producing commands, else stdout)
/// and maps the status to an exit code.
pub fn emit((config, command, outcome): CmdResult, common: &Common) -> ExitCode {
    let report_to_file = !matches!(command, "gen");
    let (doc, code) = match outcome {
        Ok(o) => {
            let mut doc = json!({
                "schema": SCHEMA,
                "command": o.command,
                "config": o.config,
                "status": o.status,
                "result": o.result,
                "checks": o.checks,
            });
            if let Some(t) = o.timing_ms {
                doc["timing_ms"] = json!(t);
            }
            let code = if o.status == Status::Ok { 0 } else { 1 };
            (doc, code)
        }
        Err(e) => {
            let doc = json!({
                "schema": SCHEMA,
                "command": command,
                "config": config,
                "status": "ERROR",
                "error": { "kind": e.kind(), "message": e.message(), "exit_code": e.code() },
            });
            (doc, e.code())
        }
    };
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    if let Err(e) = write_out(&text, common, report_to_file) {
        eprintln!("rankone: {}", e.message());
        return ExitCode::from(e.code());
    }
    ExitCode::from(code)
}
