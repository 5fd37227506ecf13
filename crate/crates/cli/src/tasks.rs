//! Corpus task files: one JSON object per task holding a canonical DAG and
//! the measured quality of each topology on it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toporoute::dag::CanonicalDag;
use toporoute::{TaskDag, TopologyScores};

use crate::error::{fail, Class, ClassExt, CliResult};
use crate::output::read_text;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskFile {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub dag: CanonicalDag<f64>,
    pub scores: TopologyScores,
}

impl TaskFile {
    pub fn dag(&self) -> CliResult<TaskDag> {
        let dag = TaskDag::from_parts(self.dag.vertices.clone(), self.dag.edges.clone());
        let report = dag.validate();
        if !report.is_ok() {
            return fail(Class::Input, format!("task {}: {report}", self.id));
        }
        Ok(dag)
    }
}

/// `*.json` files of a directory in name order.
pub fn json_files(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return fail(Class::Usage, format!("{} is not a directory", dir.display()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .class_ctx(Class::Input, format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_tasks(dir: &Path) -> CliResult<Vec<TaskFile>> {
    let files = json_files(dir, "json")?;
    if files.is_empty() {
        return fail(Class::Usage, format!("no task files in {}", dir.display()));
    }
    files
        .iter()
        .map(|p| serde_json::from_str(&read_text(p)?).class_ctx(Class::Input, format!("parsing {}", p.display())))
        .collect()
}
