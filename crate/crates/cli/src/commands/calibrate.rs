use std::path::Path;

use serde::Serialize;
use toporoute::router::{calibrate_gamma, split_dev_test, RouterError};
use toporoute::DevTask;

use super::load_router;
use crate::error::{fail, Class, ClassExt, CliResult};
use crate::output::{write_atomic, write_csv, write_json};
use crate::tasks::load_tasks;

#[derive(Serialize)]
struct Split<'a> {
    seed: u64,
    fraction: f64,
    dev: Vec<&'a str>,
    test: Vec<&'a str>,
}

pub fn run(dir: &Path, grid: &[f64], fraction: f64, seed: u64, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let base = load_router(config)?;
    let tasks = load_tasks(dir)?;
    let ids: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    let (dev_ids, test_ids) = split_dev_test(&ids, fraction, seed).class(Class::Usage)?;

    let dev: Vec<DevTask> = tasks
        .iter()
        .filter(|t| dev_ids.contains(&t.id.as_str()))
        .map(|t| Ok(DevTask { dag: t.dag()?, scores: t.scores }))
        .collect::<CliResult<_>>()?;
    let result = match calibrate_gamma(&dev, grid, &base) {
        Ok(r) => r,
        Err(RouterError::Parameter(msg) | RouterError::Config(msg)) => return fail(Class::Usage, msg),
        Err(e) => return fail(Class::Input, e),
    };

    let rows: Vec<(f64, f64, bool)> = result.table.iter().map(|&(g, q)| (g, q, g == result.chosen)).collect();
    write_csv(&out.join("calibration.csv"), &["theta_gamma", "mean_quality", "chosen"], &rows)?;
    let frozen = base.with_theta_gamma(result.chosen);
    write_atomic(&out.join("router.toml"), frozen.to_toml_string().as_bytes())?;
    write_json(&out.join("split.json"), &Split { seed, fraction, dev: dev_ids, test: test_ids.clone() })?;

    println!("split: {} dev / {} test", dev.len(), test_ids.len());
    println!("theta_gamma  mean_quality");
    for (g, q, chosen) in &rows {
        println!("{g:>11.2}  {q:.4}{}", if *chosen { "  <- chosen" } else { "" });
    }
    println!("frozen theta_gamma = {}", result.chosen);
    Ok(())
}
