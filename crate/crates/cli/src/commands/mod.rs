use std::path::Path;

use toporoute::dag::load_dag;
use toporoute::runlog::{to_jsonl, LogRecord};
use toporoute::{RouterConfig, TaskDag};

use crate::error::{Class, ClassExt, CliResult};
use crate::output::{read_text, write_atomic};

pub mod calibrate;
pub mod corpus;
pub mod exec;
pub mod lab;
pub mod report;
pub mod route;

pub fn load_dag_file(path: &Path) -> CliResult<TaskDag> {
    let ingested = load_dag(&read_text(path)?).class_ctx(Class::Input, format!("loading {}", path.display()))?;
    if !ingested.defaulted_weights.is_empty() {
        eprintln!("warning: default weight used for {}", ingested.defaulted_weights.join(", "));
    }
    Ok(ingested.dag)
}

pub fn load_router(path: Option<&Path>) -> CliResult<RouterConfig> {
    match path {
        Some(p) => RouterConfig::load(p).class(Class::Input),
        None => Ok(RouterConfig::default()),
    }
}

pub fn jsonl(records: &[LogRecord]) -> String {
    records.iter().map(to_jsonl).collect()
}

/// Appends records to a JSONL file, rewriting it atomically.
pub fn append_log(path: &Path, records: &[LogRecord]) -> CliResult<()> {
    let mut text = if path.exists() { read_text(path)? } else { String::new() };
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(&jsonl(records));
    write_atomic(path, text.as_bytes())
}
