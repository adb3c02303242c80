//! Run manifest and failure diagnoses.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use mkv_core::{Error, ErrorKind};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSIS_FILE: &str = "diagnosis.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Assumption or verification failure (exit code 1).
    Failed,
    /// Bad input (exit code 2).
    UsageError,
}

/// One per run, written next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: RunStatus,
    /// SHA-256 of the scenario description as JSON, if the command took one.
    pub scenario_hash: Option<String>,
    pub config: Value,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub seed: Option<u64>,
    /// Output files relative to the manifest directory, or absolute when written elsewhere.
    pub outputs: Vec<String>,
    pub wallclock_ms: f64,
    pub diagnosis: Option<Diagnosis>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let versions = BTreeMap::from([("mkv", env!("CARGO_PKG_VERSION")), ("mkv-core", mkv_core::VERSION)]);
        Self { command: command.into(), status: RunStatus::Ok, scenario_hash: None, config: Value::Null, versions, seed: None, outputs: Vec::new(), wallclock_ms: 0.0, diagnosis: None }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = crate::json::to_string(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text).with_context(|| format!("write manifest in {}", dir.display()))
    }
}

/// Machine-readable failure report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnosis {
    /// Coarse class: `assumption_violated`, `norm_diverged`, `series_diverged`,
    /// `verification_failed`, `numerical_failure`, `usage` or `io`.
    pub category: String,
    /// Core error kind when the failure came from the library.
    pub kind: Option<ErrorKind>,
    pub message: String,
    pub details: Value,
}

impl Diagnosis {
    pub fn from_error(e: &Error) -> Self {
        Self { category: category(e.kind).into(), kind: Some(e.kind), message: e.message.clone(), details: Value::Null }
    }

    pub fn new(category: &str, message: impl Into<String>, details: Value) -> Self {
        Self { category: category.into(), kind: None, message: message.into(), details }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(DIAGNOSIS_FILE), crate::json::to_string(self)?).with_context(|| format!("write diagnosis in {}", dir.display()))
    }
}

pub fn category(kind: ErrorKind) -> &'static str {
    use ErrorKind::*;
    match kind {
        SeriesDiverging => "series_diverged",
        Divergent | NonIntegrableSingularity => "norm_diverged",
        AssumptionViolation | EllipticityError | IndexSetError | Precondition | MissingDerivative => "assumption_violated",
        UnknownScenario | ParamOutOfRange => "usage",
        NoEnvelope => "verification_failed",
        _ => "numerical_failure",
    }
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
