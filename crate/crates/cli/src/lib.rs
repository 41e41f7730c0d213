//! Manifest-driven analyses over the core library with exact JSON reports.

pub mod analysis;
pub mod json;
pub mod manifest;

use serde_json::{json, Value};
use thiserror::Error;

use crreflect_core::manifold::ManifoldError;
use crreflect_core::nondegen::NondegenError;
use crreflect_core::reflection::ReflectionError;
use crreflect_core::segre::SegreError;
use crreflect_core::SeriesError;

use analysis::Registry;
use manifest::{Manifest, Workspace};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{what}: cannot parse {text:?}: {msg}")]
    Parse { what: String, text: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("analysis needs a {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Segre(#[from] SegreError),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Nondegen(#[from] NondegenError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub value: Value,
    /// One line per analysis for the terminal.
    pub lines: Vec<String>,
    pub errored: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.value).expect("report values serialize");
        s.push('\n');
        s
    }
}

/// Overrides from the command line; `None` keeps the manifest value.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub order: Option<i32>,
    pub seed: Option<u64>,
}

/// Builds the manifolds, checks reality, then runs the requested analyses
/// in manifest order. Analysis failures are recorded, not returned.
pub fn run(manifest: &Manifest, overrides: Overrides, registry: &Registry) -> Result<Report, CliError> {
    let order = overrides
        .order
        .or(manifest.order)
        .ok_or_else(|| CliError::Invalid("no order in the manifest or on the command line".into()))?;
    let seed = overrides.seed.or(manifest.seed).unwrap_or(0);
    let ws = Workspace::build(manifest, order, seed)?;
    let mut value = json!({
        "provenance": { "tool": "crreflect", "version": VERSION, "order": order, "seed": seed },
    });
    if manifest.analyses.is_empty() {
        return Ok(Report { value, lines: Vec::new(), errored: false });
    }

    let mut lines = Vec::new();
    let mut errored = false;
    let mut reality = serde_json::Map::new();
    for (label, m) in [("source", Some(&ws.source)), ("target", ws.target.as_ref())] {
        let Some(m) = m else { continue };
        let rep = m.verify_reality();
        reality.insert(label.into(), json!({ "ok": rep.ok, "first_failing_degree": rep.first_failing_degree }));
        if rep.ok {
            lines.push(format!("reality ({label}): ok through order {}", m.order()));
        } else {
            errored = true;
            lines.push(format!("reality ({label}): ERROR fails at degree {:?}", rep.first_failing_degree));
        }
    }
    value["reality"] = Value::Object(reality);

    let mut results = Vec::new();
    for spec in &manifest.analyses {
        let outcome = match registry.get(&spec.name) {
            Some(a) => a.run(&ws, spec),
            None => Err(CliError::Invalid(format!("unknown analysis {:?}", spec.name))),
        };
        match outcome {
            Ok(o) => {
                lines.push(format!("{}: {}", spec.name, o.summary));
                results.push(json!({ "name": spec.name, "status": "ok", "result": o.result }));
            }
            Err(e) => {
                errored = true;
                lines.push(format!("{}: ERROR {e}", spec.name));
                results.push(json!({ "name": spec.name, "status": "error", "error": e.to_string() }));
            }
        }
    }
    value["analyses"] = Value::Array(results);
    Ok(Report { value, lines, errored })
}
