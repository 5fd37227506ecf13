use std::path::Path;

use toporoute::runlog::LogRecord;

use super::{append_log, load_dag_file, load_router};
use crate::error::{Class, ClassExt, CliResult};

pub fn run(dag: &Path, config: Option<&Path>, log: Option<&Path>, task_id: Option<String>, domain: Option<String>) -> CliResult<()> {
    let cfg = load_router(config)?;
    let graph = load_dag_file(dag)?;
    let decision = toporoute::router::route(&graph, &cfg).class(Class::Input)?;
    let m = &decision.metrics;
    let exact = if m.width_is_exact { m.width_exact.to_string() } else { "not computed".into() };
    println!("{}", decision.topology);
    println!("rule: {}", decision.fired_rule);
    println!("width: exact {exact}, approx {}", m.width_approx);
    println!("depth: {:.3}", m.depth);
    println!("coupling density: {:.3}", m.coupling_density);
    println!("parallelism ratio: {:.3}", m.parallelism_ratio);
    println!("vertices: {}, edges: {}", m.vertex_count, m.edge_count);
    println!("elapsed: {} us", decision.elapsed.as_micros());
    if let Some(path) = log {
        let task_id = task_id.unwrap_or_else(|| dag.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        append_log(path, &[LogRecord::Routing { task_id, domain, decision }])?;
    }
    Ok(())
}
