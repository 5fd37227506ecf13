use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use toporoute::accounting::{cost_of, CostLedger, LedgerEntry, Money, PricingTable, RunReport};
use toporoute::DagMetrics;
use toporoute::embed::HashedBagEmbedder;
use toporoute::exec::{
    AgentBackend, Engine, EngineConfig, ExecutionTrace, HttpBackend, MockBackend, ScriptedBackend,
};
use toporoute::pipeline::{Pipeline, PipelineError, PipelineRun};
use toporoute::router::{FiredRule, Topology};
use toporoute::runlog::LogRecord;
use toporoute::templates::Templates;
use toporoute::SynthesisResult;

use super::{jsonl, load_dag_file, load_router};
use crate::error::{fail, Class, ClassExt, CliError, CliResult};
use crate::manifest::{BackendMode, MockOptions, RunManifest};
use crate::output::{write_atomic, write_json};

pub struct Agents {
    pub pool: Vec<Arc<dyn AgentBackend>>,
    pub synth: Arc<dyn AgentBackend>,
}

/// A mock pool whose per-agent latencies are drawn from the seed.
pub fn mock_agents(opts: &MockOptions, pool_size: usize, seed: u64) -> Agents {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make = |latency_ms: u64| {
        let mut b = MockBackend::new("mock", Duration::from_millis(latency_ms));
        for id in &opts.fail_on {
            b = b.failing_on(id.clone());
        }
        Arc::new(b) as Arc<dyn AgentBackend>
    };
    let pool = (0..pool_size).map(|_| make(opts.latency_ms + rng.random_range(0..=opts.jitter_ms))).collect();
    Agents { pool, synth: make(opts.latency_ms) }
}

fn agents(m: &RunManifest) -> CliResult<Agents> {
    let shared = |b: Arc<dyn AgentBackend>| Agents { pool: vec![b.clone(); m.pool_size], synth: b };
    match &m.backend {
        BackendMode::Mock => Ok(mock_agents(&m.mock, m.pool_size, m.seed)),
        BackendMode::Scripted(path) => Ok(shared(Arc::new(ScriptedBackend::load(path).class(Class::Input)?))),
        BackendMode::Provider(p) => {
            let model = m.model.clone().unwrap_or_else(|| p.default_model().to_owned());
            Ok(shared(Arc::new(HttpBackend::from_env(*p, model).class(Class::Backend)?)))
        }
    }
}

#[derive(Serialize)]
struct TraceFile<'a> {
    task_id: &'a str,
    topology: &'a Topology,
    fired_rule: FiredRule,
    metrics: &'a DagMetrics,
    executions: &'a [ExecutionTrace],
    #[serde(skip_serializing_if = "Option::is_none")]
    synthesis: Option<&'a SynthesisResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct LedgerRow<'a> {
    #[serde(flatten)]
    entry: &'a LedgerEntry,
    cost: Option<Money>,
}

#[derive(Serialize)]
struct LedgerFile<'a> {
    currency: &'a str,
    pricing_as_of: &'a str,
    entries: Vec<LedgerRow<'a>>,
    total_cost: Option<Money>,
}

fn write_ledger(dir: &Path, ledger: &CostLedger, pricing: &PricingTable) -> CliResult<()> {
    let entries = ledger
        .entries()
        .iter()
        .map(|entry| LedgerRow {
            entry,
            cost: pricing.rate(&entry.backend).ok().map(|r| r.cost(entry.prompt_tokens, entry.completion_tokens)),
        })
        .collect();
    let file = LedgerFile {
        currency: &pricing.currency,
        pricing_as_of: &pricing.as_of,
        entries,
        total_cost: cost_of(ledger, pricing).ok(),
    };
    write_json(&dir.join("ledger.json"), &file)
}

/// Everything `exec` needs besides the manifest's file paths.
pub struct Loaded {
    pub manifest: RunManifest,
    pub dag: toporoute::TaskDag,
    pub router: toporoute::RouterConfig,
    pub pricing: PricingTable,
    pub templates: Templates,
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let manifest = RunManifest::load(path)?;
    let dag = load_dag_file(&manifest.dag)?;
    let router = load_router(manifest.router.as_deref())?;
    let pricing = PricingTable::load(&manifest.pricing).class(Class::Input)?;
    let templates = match &manifest.templates {
        Some(dir) => Templates::load_dir(dir).class_ctx(Class::Input, "loading templates")?,
        None => Templates::default(),
    };
    Ok(Loaded { manifest, dag, router, pricing, templates })
}

/// Runs the pipeline. Mock and scripted agents run on a paused clock, so
/// their latencies elapse instantly and every timing is reproducible.
pub fn execute(l: &Loaded) -> CliResult<Result<PipelineRun, PipelineError>> {
    let m = &l.manifest;
    let agents = agents(m)?;
    let runtime = match m.backend {
        BackendMode::Provider(_) => tokio::runtime::Builder::new_multi_thread().enable_all().build(),
        _ => tokio::runtime::Builder::new_current_thread().enable_time().start_paused(true).build(),
    }
    .class(Class::Internal)?;
    let engine = Engine::new(agents.pool)
        .with_lead(agents.synth.clone())
        .with_config(EngineConfig { concurrency: m.concurrency, ..EngineConfig::default() })
        .with_templates(l.templates.clone());
    let embedder = HashedBagEmbedder::default();
    let pipeline = Pipeline {
        engine: &engine,
        router: l.router,
        merge: agents.synth.as_ref(),
        arbiter: agents.synth.as_ref(),
        embedder: &embedder,
        templates: &l.templates,
        theta_cs: m.theta_cs,
        task: m.task.clone(),
        context_budget: m.context_budget,
    };
    Ok(runtime.block_on(pipeline.run(&l.dag)))
}

pub fn run(path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let loaded = load(path)?;
    let m = &loaded.manifest;
    let dir = out.unwrap_or_else(|| m.output_dir.clone());
    let outcome = execute(&loaded)?;

    let run = match outcome {
        Ok(run) => run,
        Err(err) => {
            let class = if err.is_backend() { Class::Backend } else { Class::Input };
            let Some(partial) = err.partial() else {
                return Err(CliError { class, error: err.into() });
            };
            let decision = partial.decision.as_ref().expect("partial runs were routed");
            let trace = TraceFile {
                task_id: &m.task_id,
                topology: &decision.topology,
                fired_rule: decision.fired_rule,
                metrics: &decision.metrics,
                executions: &partial.traces,
                synthesis: None,
                error: Some(err.to_string()),
            };
            write_json(&dir.join("trace.json"), &trace)?;
            write_ledger(&dir, &partial.ledger, &loaded.pricing)?;
            let routing = LogRecord::Routing { task_id: m.task_id.clone(), domain: m.domain.clone(), decision: decision.clone() };
            write_atomic(&dir.join("run.jsonl"), jsonl(&[routing]).as_bytes())?;
            eprintln!("partial artifacts written to {}", dir.display());
            return fail(class, err);
        }
    };

    let d = &run.decision;
    let trace = TraceFile {
        task_id: &m.task_id,
        topology: &d.topology,
        fired_rule: d.fired_rule,
        metrics: &d.metrics,
        executions: &run.traces,
        synthesis: Some(&run.synthesis),
        error: None,
    };
    write_json(&dir.join("trace.json"), &trace)?;
    write_ledger(&dir, &run.ledger, &loaded.pricing)?;
    let final_kind = run.synthesis.route_trail.last().map(|s| s.topology).unwrap_or(d.topology.kind());
    let report = RunReport::new(&m.task_id, &run.ledger, &loaded.pricing, run.wall_clock, final_kind, run.synthesis.iterations)
        .class(Class::Input)?;
    write_json(&dir.join("report.json"), &report)?;

    let s = &run.synthesis;
    let records = [
        LogRecord::Routing { task_id: m.task_id.clone(), domain: m.domain.clone(), decision: d.clone() },
        LogRecord::Synthesis {
            task_id: m.task_id.clone(),
            iterations: s.iterations,
            reroutes: s.reroutes,
            escalated: s.escalated,
            converged: s.converged,
            consistency: s.consistency,
            route_trail: s.route_trail.clone(),
        },
        LogRecord::Run { task_id: m.task_id.clone(), domain: m.domain.clone(), report: report.clone() },
    ];
    write_atomic(&dir.join("run.jsonl"), jsonl(&records).as_bytes())?;

    println!("topology: {}", d.topology);
    println!("subtask outputs: {}", run.traces.first().map_or(0, |t| t.outputs.len()));
    println!("synthesis: {} iteration(s), consistency {:.3}{}", s.iterations, s.consistency, if s.escalated { ", escalated" } else { "" });
    println!("tokens: {} prompt, {} completion", report.prompt_tokens, report.completion_tokens);
    println!("cost: {} {}", report.total_cost, report.currency);
    println!("wall clock: {} ms", report.wall_clock.as_millis());
    println!("artifacts: {}", dir.display());
    Ok(())
}
