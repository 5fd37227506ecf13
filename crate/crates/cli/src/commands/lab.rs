use std::path::Path;

use toporoute::dag::{ArchetypeKind, DagArchetype};
use toporoute::lab::{simulate_variance, variance_ratio_bound, LabError};
use toporoute::{ConvergenceParams, SimConfig};

use crate::error::{fail, Class, ClassExt, CliResult};
use crate::output::{write_csv, write_json};

/// The line `ratio` prints.
pub fn ratio_text(omega: f64, gamma: f64, k: usize, eps: f64, c_tau: f64) -> CliResult<String> {
    let params = ConvergenceParams::new(eps, omega, gamma, k).with_c_tau(c_tau);
    match variance_ratio_bound(&params) {
        Ok(bound) => Ok(bound.to_string()),
        Err(LabError::Parameter(msg)) => fail(Class::Usage, msg),
        Err(e) => fail(Class::Internal, e),
    }
}

pub fn ratio(omega: f64, gamma: f64, k: usize, eps: f64, c_tau: f64) -> CliResult<()> {
    println!("{}", ratio_text(omega, gamma, k, eps, c_tau)?);
    Ok(())
}

pub struct SimulateArgs {
    pub archetype: String,
    pub size: usize,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub pool_size: usize,
    pub c_tau: f64,
    pub random_weights: bool,
}

pub fn simulate(a: &SimulateArgs, out: &Path) -> CliResult<()> {
    let Some(kind) = ArchetypeKind::parse(&a.archetype) else {
        return fail(Class::Usage, format!("unknown archetype `{}`", a.archetype));
    };
    let mut cfg = SimConfig::new(DagArchetype::new(kind, a.size, a.seed), a.eps, a.trials, a.seed);
    cfg.pool_size = a.pool_size;
    cfg.c_tau = a.c_tau;
    cfg.uniform_weights = !a.random_weights;
    let report = simulate_variance(&cfg).class(Class::Usage)?;

    let header = [
        "trial",
        "var_model",
        "var_topology",
        "quality_parallel",
        "quality_sequential",
        "quality_hierarchical",
        "quality_hybrid",
    ];
    write_csv(&out.join("trials.csv"), &header, &report.rows)?;
    write_json(&out.join("summary.json"), &report.summary)?;

    let s = &report.summary;
    println!("archetype: {} (size {}, omega {}, gamma {:.3})", s.archetype.kind.as_str(), s.k, s.omega, s.gamma);
    println!("mean Var_M: {:.6e} (bound {:.6e})", s.mean_var_model, s.model_variance_bound);
    println!("mean Var_tau: {:.6e}", s.mean_var_topology);
    println!("ratio: {}  bound: {}", s.ratio, s.bound);
    if !s.within_hypothesis {
        println!("note: random weights, outside the bound's uniform-weight hypothesis");
    }
    let verdict = if s.ratio_meets_bound { "ratio >= bound" } else { "ratio BELOW bound" };
    println!("verdict: {verdict}");
    Ok(())
}
