//! Task dependency DAG: data model, validation, structural metrics,
//! layering, synthetic archetypes and ingestion of decomposer output.

mod archetype;
mod ingest;
mod metrics;
mod validate;
mod width;

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use archetype::{generate_archetype, generate_archetype_with, ArchetypeKind, DagArchetype, WeightMode};
pub use ingest::{
    from_canonical_json, load_dag, parse_decomposition, to_canonical_json, to_decomposition_json,
    CanonicalDag, DecompositionRecord, IngestError, Ingested,
};
pub use metrics::{compute_metrics, topological_layers, DagMetrics, WidthMode};
pub use validate::{validate_dag, ValidationReport, Violation};
pub use width::{max_bipartite_matching, transitive_closure};

/// Declared context coupling between a subtask and its dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CouplingLabel {
    #[default]
    None,
    Weak,
    Strong,
    Critical,
}

impl CouplingLabel {
    pub const ALL: [CouplingLabel; 4] = [
        CouplingLabel::None,
        CouplingLabel::Weak,
        CouplingLabel::Strong,
        CouplingLabel::Critical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CouplingLabel::None => "none",
            CouplingLabel::Weak => "weak",
            CouplingLabel::Strong => "strong",
            CouplingLabel::Critical => "critical",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "none" => Some(CouplingLabel::None),
            "weak" => Some(CouplingLabel::Weak),
            "strong" => Some(CouplingLabel::Strong),
            "critical" => Some(CouplingLabel::Critical),
            _ => None,
        }
    }

    /// Nearest label for a raw coupling value.
    pub fn nearest<S: Scalar>(value: S) -> Self {
        let v = value.as_f64();
        *Self::ALL
            .iter()
            .min_by(|a, b| {
                let da = (coupling_from_label::<f64>(**a) - v).abs();
                let db = (coupling_from_label::<f64>(**b) - v).abs();
                da.total_cmp(&db)
            })
            .expect("four labels")
    }
}

impl fmt::Display for CouplingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coupling strength for a declared label: none 0.0, weak 0.3, strong 0.7,
/// critical 1.0.
pub fn coupling_from_label<S: Scalar>(label: CouplingLabel) -> S {
    match label {
        CouplingLabel::None => S::zero(),
        CouplingLabel::Weak => S::lit(0.3),
        CouplingLabel::Strong => S::lit(0.7),
        CouplingLabel::Critical => S::one(),
    }
}

/// One vertex of a task DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Subtask<S> {
    pub id: String,
    pub description: String,
    /// Estimated token cost.
    pub weight: S,
    #[serde(default)]
    pub coupling: CouplingLabel,
}

impl<S: Scalar> Subtask<S> {
    pub fn new(id: impl Into<String>, description: impl Into<String>, weight: S) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            weight,
            coupling: CouplingLabel::None,
        }
    }

    pub fn with_coupling(mut self, coupling: CouplingLabel) -> Self {
        self.coupling = coupling;
        self
    }
}

/// Dependency edge: `from` must complete before `to` starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Edge<S> {
    pub from: String,
    pub to: String,
    pub coupling: S,
}

/// A task decomposed into subtasks with dependency edges.
///
/// Construction does not check anything; [`validate_dag`] reports every
/// violated invariant and the analysis functions refuse invalid graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDag<S> {
    vertices: Vec<Subtask<S>>,
    edges: Vec<Edge<S>>,
}

impl<S: Scalar> TaskDag<S> {
    pub fn from_parts(vertices: Vec<Subtask<S>>, edges: Vec<Edge<S>>) -> Self {
        Self { vertices, edges }
    }

    pub fn builder() -> DagBuilder<S> {
        DagBuilder { vertices: Vec::new(), edges: Vec::new() }
    }

    pub fn vertices(&self) -> &[Subtask<S>] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, id: &str) -> Option<&Subtask<S>> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn total_weight(&self) -> S {
        self.vertices.iter().map(|v| v.weight).sum()
    }

    /// Ids of the direct predecessors of `id`, in edge order.
    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.to == id)
            .map(|e| e.from.as_str())
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dag(self)
    }

    /// Indexed view of a valid DAG, or the validation report on failure.
    pub(crate) fn structure(&self) -> Result<Structure, DagError> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(DagError::Invalid(report));
        }
        Ok(Structure::build(self))
    }

    /// Same graph with every edge coupling replaced by `f(edge)`.
    pub fn map_couplings(&self, mut f: impl FnMut(&Edge<S>) -> S) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { from: e.from.clone(), to: e.to.clone(), coupling: f(e) })
            .collect();
        Self { vertices: self.vertices.clone(), edges }
    }
}

pub struct DagBuilder<S> {
    vertices: Vec<Subtask<S>>,
    edges: Vec<Edge<S>>,
}

impl<S: Scalar> DagBuilder<S> {
    pub fn vertex(mut self, id: &str, weight: f64) -> Self {
        self.vertices.push(Subtask::new(id, format!("subtask {id}"), S::lit(weight)));
        self
    }

    pub fn subtask(mut self, subtask: Subtask<S>) -> Self {
        self.vertices.push(subtask);
        self
    }

    pub fn edge(mut self, from: &str, to: &str, coupling: f64) -> Self {
        self.edges.push(Edge { from: from.into(), to: to.into(), coupling: S::lit(coupling) });
        self
    }

    pub fn build(self) -> TaskDag<S> {
        TaskDag { vertices: self.vertices, edges: self.edges }
    }
}

#[derive(Debug, Error)]
pub enum DagError {
    #[error("invalid task DAG: {0}")]
    Invalid(ValidationReport),
    #[error("archetype {kind:?} needs at least {min} vertices, got {size}")]
    ArchetypeTooSmall { kind: ArchetypeKind, size: usize, min: usize },
}

/// Adjacency and ordering for a validated DAG. Vertex indices follow
/// `TaskDag::vertices` order.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
    /// Deterministic topological order (Kahn, smallest index first).
    pub topo: Vec<usize>,
}

impl Structure {
    fn build<S: Scalar>(dag: &TaskDag<S>) -> Self {
        let n = dag.vertices.len();
        let index: HashMap<String, usize> =
            dag.vertices.iter().enumerate().map(|(i, v)| (v.id.clone(), i)).collect();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for e in &dag.edges {
            let (u, v) = (index[&e.from], index[&e.to]);
            succ[u].push(v);
            pred[v].push(u);
        }
        let mut indegree: Vec<usize> = pred.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(Reverse(u)) = ready.pop() {
            topo.push(u);
            for &v in &succ[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
        debug_assert_eq!(topo.len(), n, "structure built on a cyclic graph");
        Self { succ, pred, topo }
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    /// Longest-path layer (0-based) of every vertex.
    pub fn layer_of(&self) -> Vec<usize> {
        let mut layer = vec![0usize; self.len()];
        for &v in &self.topo {
            layer[v] = self.pred[v].iter().map(|&u| layer[u] + 1).max().unwrap_or(0);
        }
        layer
    }
}

/// Vertex ids ordered by (layer, id), the order used for agent assignment.
pub fn layer_then_id_order<S: Scalar>(dag: &TaskDag<S>) -> Result<Vec<String>, DagError> {
    let layers = topological_layers(dag)?;
    Ok(layers.into_iter().flatten().collect())
}

/// Map from vertex id to its 0-based longest-path layer.
pub fn layer_map<S: Scalar>(dag: &TaskDag<S>) -> Result<BTreeMap<String, usize>, DagError> {
    let st = dag.structure()?;
    let layer = st.layer_of();
    Ok(dag.vertices.iter().enumerate().map(|(i, v)| (v.id.clone(), layer[i])).collect())
}
