//! JSONL run log: one JSON object per line, each carrying
//! `schema_version` and a `kind` tag (`routing`, `synthesis`, `oracle`,
//! `run`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accounting::RunReport;
use crate::router::TopologyKind;
use crate::synthesis::RouteStep;
use crate::{RoutingDecision, TopologyScores};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Routing {
        task_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<String>,
        decision: RoutingDecision,
    },
    Synthesis {
        task_id: String,
        iterations: usize,
        reroutes: usize,
        escalated: bool,
        converged: bool,
        consistency: f64,
        route_trail: Vec<RouteStep<f64>>,
    },
    /// Router choice next to the best topology found by exhaustive evaluation.
    Oracle { task_id: String, router: TopologyKind, oracle: TopologyKind, scores: TopologyScores },
    Run {
        task_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<String>,
        report: RunReport,
    },
}

impl LogRecord {
    pub fn task_id(&self) -> &str {
        match self {
            LogRecord::Routing { task_id, .. }
            | LogRecord::Synthesis { task_id, .. }
            | LogRecord::Oracle { task_id, .. }
            | LogRecord::Run { task_id, .. } => task_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: LogRecord,
}

impl From<LogRecord> for LogLine {
    fn from(record: LogRecord) -> Self {
        Self { schema_version: SCHEMA_VERSION, record }
    }
}

/// One JSON line, newline-terminated.
pub fn to_jsonl(record: &LogRecord) -> String {
    let line = LogLine::from(record.clone());
    let mut s = serde_json::to_string(&line).expect("log records serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    /// Lines that were not valid records of a known schema version.
    pub skipped: usize,
}

/// Parses JSONL text. Blank lines are ignored; corrupt lines and lines
/// with another schema version are counted in `skipped`.
pub fn parse_log(text: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<LogLine>(line) {
            Ok(l) if l.schema_version == SCHEMA_VERSION => out.records.push(l.record),
            _ => out.skipped += 1,
        }
    }
    out
}

/// Number of tasks per synthesis iteration count.
pub fn iteration_histogram(records: &[LogRecord]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for r in records {
        if let LogRecord::Synthesis { iterations, .. } = r {
            *h.entry(*iterations).or_insert(0) += 1;
        }
    }
    h
}
