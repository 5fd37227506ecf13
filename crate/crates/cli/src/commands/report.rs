use std::path::Path;

use toporoute::accounting::topology_distribution;
use toporoute::lab::ConfusionMatrix;
use toporoute::runlog::{iteration_histogram, parse_log, LogRecord};

use crate::error::{fail, Class, ClassExt, CliResult};
use crate::output::{read_text, write_atomic, write_csv};
use crate::tasks::json_files;

pub fn run(dir: &Path, out: &Path) -> CliResult<()> {
    let files = json_files(dir, "jsonl")?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for f in &files {
        let parsed = parse_log(&read_text(f)?);
        records.extend(parsed.records);
        skipped += parsed.skipped;
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} corrupt or unknown log line(s)");
    }
    if records.is_empty() {
        return fail(Class::Usage, format!("no log records in {}", dir.display()));
    }

    let routed: Vec<(String, _)> = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Routing { domain, decision, .. } => {
                Some((domain.clone().unwrap_or_else(|| "all".into()), decision.topology.kind()))
            }
            _ => None,
        })
        .collect();
    if !routed.is_empty() {
        let table = topology_distribution(&routed).class(Class::Internal)?;
        write_atomic(&out.join("distribution.csv"), table.to_csv().as_bytes())?;
        println!("{}", table.to_table());
    }

    let mut matrix = ConfusionMatrix::default();
    for r in &records {
        if let LogRecord::Oracle { router, oracle, .. } = r {
            matrix.add(*router, *oracle);
        }
    }
    if matrix.total() > 0 {
        write_atomic(&out.join("confusion.csv"), matrix.to_csv().as_bytes())?;
        println!("{}", matrix.to_table());
    }

    let hist = iteration_histogram(&records);
    if !hist.is_empty() {
        let total: usize = hist.values().sum();
        let rows: Vec<(usize, usize, f64)> =
            hist.iter().map(|(&it, &n)| (it, n, 100.0 * n as f64 / total as f64)).collect();
        write_csv(&out.join("iterations.csv"), &["iterations", "tasks", "percent"], &rows)?;
        println!("iterations  tasks  percent");
        for (it, n, p) in &rows {
            println!("{it:>10}  {n:>5}  {p:>6.1}");
        }
    }
    println!("{} record(s) from {} file(s); output in {}", records.len(), files.len(), out.display());
    Ok(())
}
