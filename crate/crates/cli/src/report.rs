use std::fs;
use std::path::Path;
use std::time::Instant;

use detloss::Error;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct Report<'a, A: Serialize> {
    pub command: &'a str,
    pub args: &'a A,
    pub input_digest: String,
    pub results: Value,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<f64>,
}

pub fn digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// A command failure with its process exit code and optional diagnostics
/// to embed in the report.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub details: Value,
}

impl Failure {
    pub const INFEASIBLE: u8 = 2;
    pub const INPUT: u8 = 3;
    pub const NUMERICAL: u8 = 4;

    pub fn input(message: String) -> Self {
        Self {
            code: Self::INPUT,
            message,
            details: Value::Null,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::input(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, details) = match &e {
            Error::Infeasible { margin } => (Self::INFEASIBLE, json!({ "kind": "infeasible", "margin": margin })),
            Error::UnreachableDistance => (Self::INFEASIBLE, json!({ "kind": "unreachable_distance" })),
            Error::Numerical {
                reconstruction,
                violation,
                ..
            } => (
                Self::NUMERICAL,
                json!({ "kind": "numerical", "reconstruction": reconstruction, "violation": violation }),
            ),
            Error::Consistency(_) => (Self::NUMERICAL, json!({ "kind": "consistency" })),
            _ => (Self::INPUT, json!({ "kind": "input" })),
        };
        Self { code, message, details }
    }
}

/// Serializes the report for `command`. On failure the report carries an
/// `error` object instead of results, and the failure's exit code is
/// returned.
pub fn emit<A: Serialize>(
    command: &str,
    args: &A,
    out: Option<&Path>,
    timing: bool,
    run: impl FnOnce() -> Result<(Vec<u8>, Value), Failure>,
) -> u8 {
    let start = Instant::now();
    let (source, results, code) = match run() {
        Ok((source, results)) => (source, results, 0),
        Err(f) => {
            eprintln!("detloss {command}: {}", f.message);
            let results = json!({ "error": { "message": f.message, "details": f.details } });
            (Vec::new(), results, f.code)
        }
    };
    let report = Report {
        command,
        args,
        input_digest: digest(&source),
        results,
        version: env!("CARGO_PKG_VERSION"),
        duration_ms: timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match write(out, text.as_bytes()) {
        Ok(()) => code,
        Err(f) => {
            eprintln!("detloss {command}: {}", f.message);
            f.code
        }
    }
}

pub fn write(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure::io(path, e)),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}
