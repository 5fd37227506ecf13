//! Executing a routed plan over agent backends.

mod backend;
mod context;
mod engine;
mod http;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use crate::router::duration_micros;
use crate::dag::{layer_then_id_order, DagError, TaskDag};
use crate::router::{Topology, TopologyKind};
use crate::scalar::Scalar;

pub use backend::{
    whitespace_tokens, AgentBackend, AgentOutput, AgentRequest, BackendError, BackendId, MockBackend, ScriptEntry,
    ScriptFixture, ScriptedBackend, ScriptedReply,
};
pub use context::{merge_context, output_tokens, MergedContext};
pub use engine::{Engine, EngineConfig};
pub use http::{HttpBackend, Provider, DEFAULT_MAX_TOKENS};

/// Trace key under which the lead agent's reconciled output is stored.
pub const LEAD_KEY: &str = "lead";

pub const DEFAULT_CONTEXT_BUDGET: u64 = 8_000;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("{} subtask(s) failed: {}", failed.len(), failed.join(", "))]
    Failed { failed: Vec<String>, trace: Box<ExecutionTrace> },
    #[error("lead agent failed: {error}")]
    LeadFailed { error: BackendError, trace: Box<ExecutionTrace> },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Dag(#[from] DagError),
}

impl ExecError {
    /// The partial trace, when execution got far enough to have one.
    pub fn trace(&self) -> Option<&ExecutionTrace> {
        match self {
            ExecError::Failed { trace, .. } | ExecError::LeadFailed { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Round-robin over the pool in (layer, id) order: the i-th vertex gets
/// pool index `i % pool_len`.
pub fn assign_agents<S: Scalar>(dag: &TaskDag<S>, pool_len: usize) -> Result<BTreeMap<String, usize>, ExecError> {
    if pool_len == 0 {
        return Err(ExecError::Plan("empty backend pool".into()));
    }
    Ok(layer_then_id_order(dag)?.into_iter().enumerate().map(|(i, id)| (id, i % pool_len)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub topology: Topology,
    pub pool: Vec<BackendId>,
    /// Vertex id → index into `pool`.
    pub assignments: BTreeMap<String, usize>,
    /// Invocation groups, run in order; members of a group may overlap.
    pub groups: Vec<Vec<String>>,
    pub context_budget: u64,
    /// Task text plus a short plan summary, given to every invocation.
    pub global_context: String,
}

impl ExecutionPlan {
    pub fn new<S: Scalar>(
        dag: &TaskDag<S>,
        topology: Topology,
        pool: &[BackendId],
        task: &str,
        context_budget: u64,
    ) -> Result<Self, ExecError> {
        if context_budget == 0 {
            return Err(ExecError::Plan("context budget must be positive".into()));
        }
        let assignments = assign_agents(dag, pool.len())?;
        let order = layer_then_id_order(dag)?;
        let groups = match &topology {
            Topology::Parallel => vec![order],
            Topology::Sequential => order.into_iter().map(|id| vec![id]).collect(),
            Topology::Hierarchical => crate::dag::topological_layers(dag)?,
            Topology::Hybrid { stages } => {
                let mut seen: Vec<&String> = stages.iter().flatten().collect();
                seen.sort();
                let mut expected: Vec<&String> = assignments.keys().collect();
                expected.sort();
                if seen != expected {
                    return Err(ExecError::Plan("hybrid stages do not partition the DAG".into()));
                }
                stages.clone()
            }
        };
        let summary = format!(
            "Plan: {} subtasks, {} topology, {} group(s), {} agent(s).",
            dag.vertex_count(),
            topology.kind(),
            groups.len(),
            pool.len()
        );
        let global_context = if task.is_empty() { summary } else { format!("Task: {task}\n\n{summary}") };
        Ok(Self { topology, pool: pool.to_vec(), assignments, groups, context_budget, global_context })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub subtask_id: String,
    pub backend: BackendId,
    /// Offsets from the start of the execution.
    #[serde(with = "duration_micros")]
    pub start: Duration,
    #[serde(with = "duration_micros")]
    pub end: Duration,
    pub attempts: u32,
    pub error: Option<BackendError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTiming {
    pub vertices: Vec<String>,
    #[serde(with = "duration_micros")]
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub topology: TopologyKind,
    pub outputs: BTreeMap<String, AgentOutput>,
    /// Predecessor context merged for each invoked vertex.
    pub contexts: BTreeMap<String, MergedContext>,
    /// Lead agent's assignment reply (hierarchical only).
    pub lead_assignment: Option<AgentOutput>,
    /// Lead agent's reconciled output (hierarchical only).
    #[serde(rename = "lead")]
    pub lead: Option<AgentOutput>,
    /// Sorted by (start, subtask id).
    pub invocations: Vec<InvocationRecord>,
    pub group_timings: Vec<GroupTiming>,
    #[serde(with = "duration_micros")]
    pub wall_clock: Duration,
    pub max_in_flight: usize,
    /// Edges (u, v) where v started before u finished.
    pub edge_violations: Vec<(String, String)>,
    pub failures: BTreeMap<String, BackendError>,
}

impl ExecutionTrace {
    pub(crate) fn new(topology: TopologyKind) -> Self {
        Self {
            topology,
            outputs: BTreeMap::new(),
            contexts: BTreeMap::new(),
            lead_assignment: None,
            lead: None,
            invocations: Vec::new(),
            group_timings: Vec::new(),
            wall_clock: Duration::ZERO,
            max_in_flight: 0,
            edge_violations: Vec::new(),
            failures: BTreeMap::new(),
        }
    }

    /// Every agent output in the trace, lead calls included.
    pub fn all_outputs(&self) -> impl Iterator<Item = &AgentOutput> {
        self.lead_assignment.iter().chain(self.outputs.values()).chain(self.lead.iter())
    }

    fn end_of(&self, id: &str) -> Duration {
        self.invocations.iter().filter(|r| r.subtask_id == id).map(|r| r.end).max().unwrap_or(Duration::MAX)
    }

    /// Outputs handed to synthesis: the sequence in schedule order for
    /// Sequential, the reconciled lead output for Hierarchical, the final
    /// stage for Hybrid and everything for Parallel, each in completion
    /// order.
    pub fn synthesis_inputs(&self) -> Vec<&AgentOutput> {
        let pick = |ids: &[String]| -> Vec<&AgentOutput> {
            let mut outs: Vec<&AgentOutput> = ids.iter().filter_map(|id| self.outputs.get(id)).collect();
            outs.sort_by(|a, b| self.end_of(&a.subtask_id).cmp(&self.end_of(&b.subtask_id)).then(a.subtask_id.cmp(&b.subtask_id)));
            outs
        };
        match self.topology {
            TopologyKind::Hierarchical => self.lead.iter().collect(),
            TopologyKind::Sequential => {
                let ids: Vec<String> = self.group_timings.iter().flat_map(|g| g.vertices.clone()).collect();
                ids.iter().filter_map(|id| self.outputs.get(id)).collect()
            }
            TopologyKind::Hybrid => self.group_timings.last().map(|g| pick(&g.vertices)).unwrap_or_default(),
            TopologyKind::Parallel => {
                let ids: Vec<String> = self.outputs.keys().cloned().collect();
                pick(&ids)
            }
        }
    }
}
