use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tokio::time::Instant;

use super::{
    duration_micros, merge_context, AgentBackend, AgentOutput, AgentRequest, BackendError, BackendId, ExecError,
    ExecutionPlan, ExecutionTrace, GroupTiming, InvocationRecord, MergedContext,
};
use crate::embed::{Embedder, HashedBagEmbedder};
use crate::router::TopologyKind;
use crate::scalar::Scalar;
use crate::dag::TaskDag;
use crate::templates::{render, Templates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Maximum invocations in flight at once.
    pub concurrency: usize,
    /// Extra attempts after a transient failure or timeout.
    pub retries: u32,
    /// First retry delay; doubles on each further retry.
    #[serde(with = "duration_micros")]
    pub backoff: Duration,
    /// Per-attempt timeout.
    #[serde(with = "duration_micros")]
    pub timeout: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { concurrency: 8, retries: 2, backoff: Duration::from_millis(250), timeout: Duration::from_secs(120) }
    }
}

#[derive(Clone, Copy)]
enum ContextScope {
    /// Global context only.
    None,
    /// Outputs of direct DAG predecessors.
    Predecessors,
    /// Outputs of every earlier group.
    EarlierGroups,
}

struct Run {
    start: Instant,
    permits: Semaphore,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    records: Mutex<Vec<InvocationRecord>>,
}

pub struct Engine {
    config: EngineConfig,
    pool: Vec<Arc<dyn AgentBackend>>,
    lead: Option<Arc<dyn AgentBackend>>,
    relevance: Arc<dyn Embedder<f64>>,
    templates: Templates,
}

impl Engine {
    pub fn new(pool: Vec<Arc<dyn AgentBackend>>) -> Self {
        Self {
            config: EngineConfig::default(),
            pool,
            lead: None,
            relevance: Arc::new(HashedBagEmbedder::default()),
            templates: Templates::default(),
        }
    }

    pub fn with_config(mut self, config: EngineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_lead(mut self, lead: Arc<dyn AgentBackend>) -> Self {
        self.lead = Some(lead);
        self
    }

    pub fn with_relevance(mut self, relevance: Arc<dyn Embedder<f64>>) -> Self {
        self.relevance = relevance;
        self
    }

    pub fn with_templates(mut self, templates: Templates) -> Self {
        self.templates = templates;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn pool_ids(&self) -> Vec<BackendId> {
        self.pool.iter().map(|b| b.id().clone()).collect()
    }

    /// Dispatches on the plan's topology.
    pub async fn execute<S: Scalar>(&self, dag: &TaskDag<S>, plan: &ExecutionPlan) -> Result<ExecutionTrace, ExecError> {
        match plan.topology.kind() {
            TopologyKind::Parallel => self.exec_parallel(dag, plan).await,
            TopologyKind::Sequential => self.exec_sequential(dag, plan).await,
            TopologyKind::Hierarchical => self.exec_hierarchical(dag, plan).await,
            TopologyKind::Hybrid => self.exec_hybrid(dag, plan).await,
        }
    }

    /// All vertices at once (up to the concurrency cap), global context only.
    pub async fn exec_parallel<S: Scalar>(&self, dag: &TaskDag<S>, plan: &ExecutionPlan) -> Result<ExecutionTrace, ExecError> {
        self.check(plan, TopologyKind::Parallel)?;
        let run = self.start_run();
        let mut trace = ExecutionTrace::new(TopologyKind::Parallel);
        self.run_groups(&run, dag, plan, ContextScope::None, None, false, &mut trace).await;
        self.finish(run, dag, trace)
    }

    /// One vertex at a time, each with its direct predecessors' outputs.
    pub async fn exec_sequential<S: Scalar>(&self, dag: &TaskDag<S>, plan: &ExecutionPlan) -> Result<ExecutionTrace, ExecError> {
        self.check(plan, TopologyKind::Sequential)?;
        let run = self.start_run();
        let mut trace = ExecutionTrace::new(TopologyKind::Sequential);
        self.run_groups(&run, dag, plan, ContextScope::Predecessors, None, true, &mut trace).await;
        self.finish(run, dag, trace)
    }

    /// Stage by stage; each stage sees every output from earlier stages.
    pub async fn exec_hybrid<S: Scalar>(&self, dag: &TaskDag<S>, plan: &ExecutionPlan) -> Result<ExecutionTrace, ExecError> {
        self.check(plan, TopologyKind::Hybrid)?;
        let run = self.start_run();
        let mut trace = ExecutionTrace::new(TopologyKind::Hybrid);
        self.run_groups(&run, dag, plan, ContextScope::EarlierGroups, None, true, &mut trace).await;
        self.finish(run, dag, trace)
    }

    /// Lead assigns, sub-agents run layer by layer, lead reconciles.
    /// Sub-agent failures reach the lead as notices; a lead failure is
    /// fatal.
    pub async fn exec_hierarchical<S: Scalar>(
        &self,
        dag: &TaskDag<S>,
        plan: &ExecutionPlan,
    ) -> Result<ExecutionTrace, ExecError> {
        self.check(plan, TopologyKind::Hierarchical)?;
        let lead = self.lead.clone().ok_or_else(|| ExecError::Plan("hierarchical plan needs a lead agent".into()))?;
        let run = self.start_run();
        let mut trace = ExecutionTrace::new(TopologyKind::Hierarchical);

        let subtasks: Vec<String> = plan
            .groups
            .iter()
            .flatten()
            .map(|id| format!("- {id}: {}", dag.vertex(id).map_or("", |v| v.description.as_str())))
            .collect();
        let assign = AgentRequest {
            subtask_id: super::LEAD_KEY.into(),
            instruction: render(
                &self.templates.lead_assign,
                &[("task", &plan.global_context), ("subtasks", &subtasks.join("\n"))],
            ),
            context: String::new(),
        };
        match self.call(&run, lead.as_ref(), assign).await {
            Ok(out) => trace.lead_assignment = Some(out),
            Err(error) => return Err(self.lead_failed(run, dag, trace, error)),
        }
        let note = trace.lead_assignment.as_ref().map(|o| format!("Lead instructions:\n{}", o.text));

        self.run_groups(&run, dag, plan, ContextScope::Predecessors, note.as_deref(), false, &mut trace).await;

        let reports: Vec<String> = plan
            .groups
            .iter()
            .flatten()
            .map(|id| match (trace.outputs.get(id), trace.failures.get(id)) {
                (Some(out), _) => format!("### {id}\n{}", out.text),
                (None, Some(err)) => format!("### {id}\nFAILED: {err}"),
                (None, None) => format!("### {id}\nFAILED: not run"),
            })
            .collect();
        let reconcile = AgentRequest {
            subtask_id: super::LEAD_KEY.into(),
            instruction: render(
                &self.templates.lead_reconcile,
                &[("task", &plan.global_context), ("outputs", &reports.join("\n\n"))],
            ),
            context: String::new(),
        };
        match self.call(&run, lead.as_ref(), reconcile).await {
            Ok(out) => trace.lead = Some(out),
            Err(error) => return Err(self.lead_failed(run, dag, trace, error)),
        }
        Ok(self.seal(run, dag, trace))
    }

    fn check(&self, plan: &ExecutionPlan, kind: TopologyKind) -> Result<(), ExecError> {
        if plan.topology.kind() != kind {
            return Err(ExecError::Plan(format!("{} executor given a {} plan", kind, plan.topology.kind())));
        }
        if plan.pool != self.pool_ids() {
            return Err(ExecError::Plan("plan pool does not match the engine's backends".into()));
        }
        if self.config.concurrency == 0 {
            return Err(ExecError::Plan("concurrency limit must be positive".into()));
        }
        Ok(())
    }

    fn start_run(&self) -> Run {
        Run {
            start: Instant::now(),
            permits: Semaphore::new(self.config.concurrency),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            records: Mutex::new(Vec::new()),
        }
    }

    async fn call(&self, run: &Run, backend: &dyn AgentBackend, request: AgentRequest) -> Result<AgentOutput, BackendError> {
        let _permit = run.permits.acquire().await.expect("semaphore never closed");
        let now = run.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        run.peak.fetch_max(now, Ordering::SeqCst);
        let start = run.start.elapsed();

        let mut attempts = 0u32;
        let result = loop {
            attempts += 1;
            let err = match tokio::time::timeout(self.config.timeout, backend.invoke(&request)).await {
                Ok(Ok(out)) => break Ok(out),
                Ok(Err(e)) => e,
                Err(_) => BackendError::Timeout(self.config.timeout.as_millis() as u64),
            };
            if !err.is_retryable() || attempts > self.config.retries {
                break Err(err);
            }
            tokio::time::sleep(self.config.backoff * 2u32.pow(attempts - 1)).await;
        };

        run.in_flight.fetch_sub(1, Ordering::SeqCst);
        run.records.lock().unwrap().push(InvocationRecord {
            subtask_id: request.subtask_id.clone(),
            backend: backend.id().clone(),
            start,
            end: run.start.elapsed(),
            attempts,
            error: result.as_ref().err().cloned(),
        });
        result
    }

    #[allow(clippy::too_many_arguments)]
    async fn run_groups<S: Scalar>(
        &self,
        run: &Run,
        dag: &TaskDag<S>,
        plan: &ExecutionPlan,
        scope: ContextScope,
        note: Option<&str>,
        stop_on_failure: bool,
        trace: &mut ExecutionTrace,
    ) {
        for group in &plan.groups {
            let group_start = run.start.elapsed();
            let mut calls = Vec::with_capacity(group.len());
            for id in group {
                let description = dag.vertex(id).map_or("", |v| v.description.as_str());
                let merged = match scope {
                    ContextScope::None => MergedContext::default(),
                    ContextScope::Predecessors => {
                        let preds: Vec<&AgentOutput> =
                            dag.predecessors(id).into_iter().filter_map(|p| trace.outputs.get(p)).collect();
                        merge_context(&preds, description, plan.context_budget, self.relevance.as_ref())
                    }
                    ContextScope::EarlierGroups => {
                        let earlier: Vec<&AgentOutput> = trace.outputs.values().collect();
                        merge_context(&earlier, description, plan.context_budget, self.relevance.as_ref())
                    }
                };
                let mut context = plan.global_context.clone();
                for part in [note, Some(merged.text.as_str())].into_iter().flatten().filter(|p| !p.is_empty()) {
                    context.push_str("\n\n");
                    context.push_str(part);
                }
                let request = AgentRequest { subtask_id: id.clone(), instruction: description.to_owned(), context };
                let backend = self.pool[plan.assignments[id]].clone();
                trace.contexts.insert(id.clone(), merged);
                calls.push(async move { (request.subtask_id.clone(), self.call(run, backend.as_ref(), request).await) });
            }
            let mut failed = false;
            for (id, result) in join_all(calls).await {
                match result {
                    Ok(out) => {
                        trace.outputs.insert(id, out);
                    }
                    Err(e) => {
                        failed = true;
                        trace.failures.insert(id, e);
                    }
                }
            }
            trace.group_timings.push(GroupTiming { vertices: group.clone(), duration: run.start.elapsed() - group_start });
            if failed && stop_on_failure {
                break;
            }
        }
    }

    fn seal<S: Scalar>(&self, run: Run, dag: &TaskDag<S>, mut trace: ExecutionTrace) -> ExecutionTrace {
        trace.wall_clock = run.start.elapsed();
        trace.max_in_flight = run.peak.load(Ordering::SeqCst);
        let mut records = run.records.into_inner().unwrap();
        records.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.subtask_id.cmp(&b.subtask_id)).then(a.end.cmp(&b.end)));
        for e in dag.edges() {
            let done = |id: &str| records.iter().find(|r| r.subtask_id == id && r.error.is_none());
            if let (Some(u), Some(v)) = (done(&e.from), done(&e.to)) {
                if u.end > v.start {
                    trace.edge_violations.push((e.from.clone(), e.to.clone()));
                }
            }
        }
        trace.invocations = records;
        trace
    }

    fn finish<S: Scalar>(&self, run: Run, dag: &TaskDag<S>, trace: ExecutionTrace) -> Result<ExecutionTrace, ExecError> {
        let trace = self.seal(run, dag, trace);
        if trace.failures.is_empty() {
            Ok(trace)
        } else {
            Err(ExecError::Failed { failed: trace.failures.keys().cloned().collect(), trace: Box::new(trace) })
        }
    }

    fn lead_failed<S: Scalar>(&self, run: Run, dag: &TaskDag<S>, trace: ExecutionTrace, error: BackendError) -> ExecError {
        ExecError::LeadFailed { error, trace: Box::new(self.seal(run, dag, trace)) }
    }
}
