//! One task end to end: route, execute, synthesize, with every agent call
//! recorded in a cost ledger.

use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;
use tokio::time::Instant;

use crate::accounting::{CostLedger, Phase};
use crate::embed::Embedder;
use crate::exec::{AgentBackend, Engine, ExecError, ExecutionPlan, ExecutionTrace};
use crate::router::{route_with_coupling, RouterError};
use crate::synthesis::{Reroute, Rerouted, SynthesisConfig, SynthesisError, Synthesizer};
use crate::templates::Templates;
use crate::{RouterConfig, RoutingDecision, SynthesisResult, TaskDag};

pub struct Pipeline<'a> {
    pub engine: &'a Engine,
    pub router: RouterConfig,
    pub merge: &'a dyn AgentBackend,
    pub arbiter: &'a dyn AgentBackend,
    pub embedder: &'a dyn Embedder<f64>,
    pub templates: &'a Templates,
    pub theta_cs: f64,
    pub task: String,
    pub context_budget: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub decision: RoutingDecision,
    /// The first execution, then one per re-route.
    pub traces: Vec<ExecutionTrace>,
    pub synthesis: SynthesisResult,
    pub ledger: CostLedger,
    pub wall_clock: Duration,
}

/// Whatever a failed run produced before it stopped.
#[derive(Debug, Clone, Default)]
pub struct Partial {
    pub decision: Option<RoutingDecision>,
    pub traces: Vec<ExecutionTrace>,
    pub ledger: CostLedger,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("route: {0}")]
    Route(#[from] RouterError),
    #[error("execute: {error}")]
    Execute { error: ExecError, partial: Box<Partial> },
    #[error("synthesize: {error}")]
    Synthesize { error: SynthesisError<f64>, partial: Box<Partial> },
}

impl PipelineError {
    pub fn phase(&self) -> Phase {
        match self {
            PipelineError::Route(_) => Phase::Route,
            PipelineError::Execute { .. } => Phase::Execute,
            PipelineError::Synthesize { .. } => Phase::Synthesize,
        }
    }

    pub fn partial(&self) -> Option<&Partial> {
        match self {
            PipelineError::Route(_) => None,
            PipelineError::Execute { partial, .. } | PipelineError::Synthesize { partial, .. } => Some(partial),
        }
    }

    /// A backend refused or failed, as opposed to bad input.
    pub fn is_backend(&self) -> bool {
        match self {
            PipelineError::Route(_) => false,
            PipelineError::Execute { error, .. } => matches!(error, ExecError::Failed { .. } | ExecError::LeadFailed { .. }),
            PipelineError::Synthesize { error, .. } => {
                matches!(error, SynthesisError::Backend { .. } | SynthesisError::Reroute { .. })
            }
        }
    }
}

struct Rerun<'p, 'a> {
    pipeline: &'p Pipeline<'a>,
    dag: &'p TaskDag,
    traces: Vec<ExecutionTrace>,
    ledger: CostLedger,
}

impl Rerun<'_, '_> {
    fn keep(&mut self, trace: &ExecutionTrace) {
        for out in trace.all_outputs() {
            self.ledger.record(out, Phase::Execute);
        }
        self.traces.push(trace.clone());
    }
}

#[async_trait]
impl Reroute<f64> for Rerun<'_, '_> {
    async fn reroute(&mut self, gamma: f64) -> Result<Rerouted, String> {
        let decision = route_with_coupling(self.dag, &self.pipeline.router, Some(gamma)).map_err(|e| e.to_string())?;
        match self.pipeline.execute(self.dag, &decision).await {
            Ok(trace) => {
                self.keep(&trace);
                let outputs = trace.synthesis_inputs().into_iter().map(|o| o.text.clone()).collect();
                Ok(Rerouted { topology: decision.topology, outputs })
            }
            Err(e) => {
                if let Some(t) = e.trace() {
                    self.keep(t);
                }
                Err(e.to_string())
            }
        }
    }
}

impl Pipeline<'_> {
    async fn execute(&self, dag: &TaskDag, decision: &RoutingDecision) -> Result<ExecutionTrace, ExecError> {
        let plan =
            ExecutionPlan::new(dag, decision.topology.clone(), &self.engine.pool_ids(), &self.task, self.context_budget)?;
        self.engine.execute(dag, &plan).await
    }

    pub async fn run(&self, dag: &TaskDag) -> Result<PipelineRun, PipelineError> {
        let start = Instant::now();
        let decision = route_with_coupling(dag, &self.router, None)?;
        let mut rerun = Rerun { pipeline: self, dag, traces: Vec::new(), ledger: CostLedger::new() };

        let first = self.execute(dag, &decision).await;
        let trace = match first {
            Ok(t) => t,
            Err(error) => {
                if let Some(t) = error.trace() {
                    rerun.keep(t);
                }
                let partial = Partial { decision: Some(decision), traces: rerun.traces, ledger: rerun.ledger };
                return Err(PipelineError::Execute { error, partial: Box::new(partial) });
            }
        };
        rerun.keep(&trace);
        let outputs = trace.synthesis_inputs().into_iter().map(|o| o.text.clone()).collect();

        let synth = Synthesizer {
            merge: self.merge,
            arbiter: self.arbiter,
            embedder: self.embedder,
            templates: self.templates,
            config: SynthesisConfig::new(decision.metrics.coupling_density).with_theta_cs(self.theta_cs),
        };
        let result = synth.run(outputs, &decision.topology, &mut rerun).await;
        let Rerun { traces, mut ledger, .. } = rerun;
        match result {
            Ok(synthesis) => {
                for call in &synthesis.agent_calls {
                    ledger.record(call, Phase::Synthesize);
                }
                Ok(PipelineRun { decision, traces, synthesis, ledger, wall_clock: start.elapsed() })
            }
            Err(error) => {
                let partial = Partial { decision: Some(decision), traces, ledger };
                Err(PipelineError::Synthesize { error, partial: Box::new(partial) })
            }
        }
    }
}
