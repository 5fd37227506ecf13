//! Reading decomposer output and the canonical serialized DAG form.
//!
//! Decomposer output is a JSON array of records:
//!
//! ```json
//! [{"id": "v0", "description": "...", "depends_on": [], "coupling": "weak", "estimated_tokens": 500}]
//! ```
//!
//! Each `depends_on` entry becomes an edge into the record, with the
//! coupling value of the record's own label. The canonical form is an
//! object with explicit per-edge couplings.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{coupling_from_label, CouplingLabel, Edge, Subtask, TaskDag, ValidationReport};
use crate::scalar::Scalar;

pub const CANONICAL_FORMAT: &str = "toporoute.dag.v1";

/// Weight assigned when a record omits `estimated_tokens`.
pub const DEFAULT_ESTIMATED_TOKENS: f64 = 500.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {record}: {reason}")]
    MalformedRecord { record: String, reason: String },
    #[error("record {record} depends on undeclared id `{missing}`")]
    UnknownDependency { record: String, missing: String },
    #[error("document is neither a record array nor a canonical DAG object")]
    UnknownShape,
    #[error("invalid DAG: {0}")]
    Invalid(ValidationReport),
}

/// One decomposer record, as emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub id: String,
    pub description: String,
    pub depends_on: Vec<String>,
    pub coupling: CouplingLabel,
    pub estimated_tokens: f64,
}

/// A parsed DAG plus ids whose weight fell back to the default.
#[derive(Debug, Clone)]
pub struct Ingested<S> {
    pub dag: TaskDag<S>,
    pub defaulted_weights: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CanonicalDag<S> {
    pub format: String,
    pub vertices: Vec<Subtask<S>>,
    pub edges: Vec<Edge<S>>,
}

pub fn parse_decomposition<S: Scalar>(doc: &str) -> Result<Ingested<S>, IngestError> {
    let value: Value = serde_json::from_str(doc)?;
    let Value::Array(items) = value else {
        return Err(IngestError::UnknownShape);
    };
    decomposition_from_values(&items)
}

fn decomposition_from_values<S: Scalar>(items: &[Value]) -> Result<Ingested<S>, IngestError> {
    let mut vertices = Vec::with_capacity(items.len());
    let mut deps: Vec<Vec<String>> = Vec::with_capacity(items.len());
    let mut defaulted = Vec::new();

    for (i, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| IngestError::MalformedRecord {
            record: format!("#{i}"),
            reason: "not an object".into(),
        })?;
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(malformed(&format!("#{i}"), "`id` is not a string")),
            None => return Err(malformed(&format!("#{i}"), "missing field `id`")),
        };
        let name = format!("`{id}`");
        let description = match obj.get("description") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(malformed(&name, "`description` is not a string")),
            None => return Err(malformed(&name, "missing field `description`")),
        };
        let depends_on = match obj.get("depends_on") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|d| d.as_str().map(str::to_owned).ok_or_else(|| malformed(&name, "non-string dependency")))
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(malformed(&name, "`depends_on` is not an array")),
            None => return Err(malformed(&name, "missing field `depends_on`")),
        };
        let coupling = match obj.get("coupling") {
            Some(Value::String(s)) => CouplingLabel::parse(s)
                .ok_or_else(|| malformed(&name, &format!("unknown coupling label `{s}`")))?,
            Some(_) => return Err(malformed(&name, "`coupling` is not a string")),
            None => return Err(malformed(&name, "missing field `coupling`")),
        };
        let weight = match obj.get("estimated_tokens") {
            Some(v) => v.as_f64().ok_or_else(|| malformed(&name, "`estimated_tokens` is not a number"))?,
            None => {
                defaulted.push(id.clone());
                DEFAULT_ESTIMATED_TOKENS
            }
        };
        vertices.push(Subtask { id, description, weight: S::lit(weight), coupling });
        deps.push(depends_on);
    }

    let declared: HashSet<&str> = vertices.iter().map(|v| v.id.as_str()).collect();
    let mut edges = Vec::new();
    for (v, dep_ids) in vertices.iter().zip(&deps) {
        for dep in dep_ids {
            if !declared.contains(dep.as_str()) {
                return Err(IngestError::UnknownDependency { record: v.id.clone(), missing: dep.clone() });
            }
            edges.push(Edge { from: dep.clone(), to: v.id.clone(), coupling: coupling_from_label(v.coupling) });
        }
    }

    let dag = TaskDag::from_parts(vertices, edges);
    let report = dag.validate();
    if !report.is_ok() {
        return Err(IngestError::Invalid(report));
    }
    Ok(Ingested { dag, defaulted_weights: defaulted })
}

fn malformed(record: &str, reason: &str) -> IngestError {
    IngestError::MalformedRecord { record: record.to_owned(), reason: reason.to_owned() }
}

pub fn from_canonical_json<S: Scalar>(doc: &str) -> Result<TaskDag<S>, IngestError> {
    let canonical: CanonicalDag<S> = serde_json::from_str(doc)?;
    let dag = TaskDag::from_parts(canonical.vertices, canonical.edges);
    let report = dag.validate();
    if !report.is_ok() {
        return Err(IngestError::Invalid(report));
    }
    Ok(dag)
}

/// Accepts either a decomposer record array or the canonical form.
pub fn load_dag<S: Scalar>(doc: &str) -> Result<Ingested<S>, IngestError> {
    let value: Value = serde_json::from_str(doc)?;
    match &value {
        Value::Array(items) => decomposition_from_values(items),
        Value::Object(obj) if obj.contains_key("vertices") => {
            let dag = from_canonical_json(doc)?;
            Ok(Ingested { dag, defaulted_weights: Vec::new() })
        }
        _ => Err(IngestError::UnknownShape),
    }
}

pub fn to_canonical_json<S: Scalar>(dag: &TaskDag<S>) -> String {
    let canonical = CanonicalDag {
        format: CANONICAL_FORMAT.to_owned(),
        vertices: dag.vertices().to_vec(),
        edges: dag.edges().to_vec(),
    };
    serde_json::to_string_pretty(&canonical).expect("canonical DAG serializes")
}

/// Decomposer-record form. Per-edge couplings are not representable here;
/// each record carries its declared label.
pub fn to_decomposition_json<S: Scalar>(dag: &TaskDag<S>) -> String {
    let records: Vec<DecompositionRecord> = dag
        .vertices()
        .iter()
        .map(|v| DecompositionRecord {
            id: v.id.clone(),
            description: v.description.clone(),
            depends_on: dag.predecessors(&v.id).into_iter().map(str::to_owned).collect(),
            coupling: v.coupling,
            estimated_tokens: v.weight.as_f64(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}
