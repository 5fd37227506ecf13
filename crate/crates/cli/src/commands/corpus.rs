use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toporoute::accounting::{PricingTable, RunReport};
use toporoute::dag::{compute_metrics, generate_archetype, to_canonical_json, WidthMode};
use toporoute::embed::HashedBagEmbedder;
use toporoute::exec::{Engine, DEFAULT_CONTEXT_BUDGET};
use toporoute::lab::mixed_archetypes;
use toporoute::pipeline::Pipeline;
use toporoute::router::route;
use toporoute::runlog::LogRecord;
use toporoute::templates::Templates;
use toporoute::{AssumptionOne, TaskDag, TopologyScores};

use super::exec::mock_agents;
use super::{jsonl, load_router};
use crate::error::{fail, Class, ClassExt, CliResult};
use crate::manifest::MockOptions;
use crate::output::{write_atomic, write_json};
use crate::tasks::{load_tasks, TaskFile};

/// Archetype DAGs with random weights, scored by the oracle quality model
/// around a per-task base in [0.6, 0.9] plus uniform noise.
pub fn generate(count: usize, seed: u64, noise: f64, out: &Path) -> CliResult<()> {
    if count == 0 {
        return fail(Class::Usage, "count must be positive");
    }
    if !(0.0..=0.1).contains(&noise) {
        return fail(Class::Usage, format!("noise {noise} not in [0, 0.1]"));
    }
    let model = AssumptionOne::oracle();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = count.to_string().len().max(4);
    for (i, spec) in mixed_archetypes(count, seed).into_iter().enumerate() {
        let dag: TaskDag = generate_archetype(spec).class(Class::Internal)?;
        let metrics = compute_metrics(&dag, WidthMode::Exact).class(Class::Internal)?;
        let base = rng.random_range(0.6..=0.9);
        let clean = model.scores(&metrics, base);
        let scores = TopologyScores::from_fn(|k| clean.get(k) + rng.random_range(-noise..=noise));
        let task = TaskFile {
            id: format!("task-{i:0width$}"),
            domain: Some(spec.kind.as_str().to_owned()),
            dag: serde_json::from_str(&to_canonical_json(&dag)).class(Class::Internal)?,
            scores,
        };
        write_json(&out.join(format!("{}.json", task.id)), &task)?;
    }
    println!("wrote {count} task(s) to {}", out.display());
    Ok(())
}

/// Routes every task, records the router-vs-oracle pair from the task's
/// scores, then runs it on a mock pool and logs the synthesis outcome.
pub fn batch(dir: &Path, config: Option<&Path>, pricing: Option<&Path>, theta_cs: f64, out: &Path) -> CliResult<()> {
    let cfg = load_router(config)?;
    let pricing = pricing.map(PricingTable::load).transpose().class(Class::Input)?;
    let tasks = load_tasks(dir)?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_time()
        .start_paused(true)
        .build()
        .class(Class::Internal)?;
    let agents = mock_agents(&MockOptions::default(), 3, 0);
    let engine = Engine::new(agents.pool).with_lead(agents.synth.clone());
    let embedder = HashedBagEmbedder::default();
    let templates = Templates::default();

    let mut records = Vec::new();
    let mut failed = 0;
    for t in &tasks {
        let dag = t.dag()?;
        let decision = route(&dag, &cfg).class(Class::Input)?;
        let router = decision.topology.kind();
        records.push(LogRecord::Routing { task_id: t.id.clone(), domain: t.domain.clone(), decision });
        records.push(LogRecord::Oracle { task_id: t.id.clone(), router, oracle: t.scores.best(), scores: t.scores });

        let pipeline = Pipeline {
            engine: &engine,
            router: cfg,
            merge: agents.synth.as_ref(),
            arbiter: agents.synth.as_ref(),
            embedder: &embedder,
            templates: &templates,
            theta_cs,
            task: t.id.clone(),
            context_budget: DEFAULT_CONTEXT_BUDGET,
        };
        let run = match runtime.block_on(pipeline.run(&dag)) {
            Ok(run) => run,
            Err(e) => {
                eprintln!("{}: {e}", t.id);
                failed += 1;
                continue;
            }
        };
        let s = &run.synthesis;
        records.push(LogRecord::Synthesis {
            task_id: t.id.clone(),
            iterations: s.iterations,
            reroutes: s.reroutes,
            escalated: s.escalated,
            converged: s.converged,
            consistency: s.consistency,
            route_trail: s.route_trail.clone(),
        });
        if let Some(p) = &pricing {
            let kind = s.route_trail.last().map_or(router, |r| r.topology);
            let report = RunReport::new(&t.id, &run.ledger, p, run.wall_clock, kind, s.iterations).class(Class::Input)?;
            records.push(LogRecord::Run { task_id: t.id.clone(), domain: t.domain.clone(), report });
        }
    }
    write_atomic(&out.join("batch.jsonl"), jsonl(&records).as_bytes())?;
    println!("{} task(s) run, {failed} failed; log in {}", tasks.len(), out.join("batch.jsonl").display());
    if failed > 0 {
        return fail(Class::Backend, format!("{failed} task(s) failed"));
    }
    Ok(())
}
