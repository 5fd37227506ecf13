//! Monte-Carlo check of the variance ratio against its closed form.
//!
//! Each trial draws a model pool with scores uniform in [S* - ε, S*].
//! Model variance is the sample variance of those scores under a fixed
//! topology; topology variance is the sample variance of the four
//! topology qualities under a fixed model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{model_variance_bound, variance_ratio_bound, AssumptionOne, ConvergenceParams, LabError, RatioBound, S_STAR};
use crate::dag::{compute_metrics, generate_archetype_with, DagArchetype, WeightMode, WidthMode};
use crate::router::TopologyKind;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityModel {
    #[default]
    AssumptionOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SimConfig<S> {
    pub archetype: DagArchetype,
    pub pool_size: usize,
    pub epsilon: S,
    pub trials: usize,
    pub seed: u64,
    pub quality_model: QualityModel,
    pub c_tau: S,
    /// Uniform subtask weights, as the ratio bound assumes. With random
    /// weights the summary is flagged as outside that hypothesis.
    pub uniform_weights: bool,
}

impl<S: Scalar> SimConfig<S> {
    pub fn new(archetype: DagArchetype, epsilon: S, trials: usize, seed: u64) -> Self {
        Self {
            archetype,
            pool_size: 5,
            epsilon,
            trials,
            seed,
            quality_model: QualityModel::AssumptionOne,
            c_tau: S::lit(0.5),
            uniform_weights: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrialRow<S> {
    pub trial: usize,
    pub var_model: S,
    pub var_topology: S,
    pub quality_parallel: S,
    pub quality_sequential: S,
    pub quality_hierarchical: S,
    pub quality_hybrid: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SimSummary<S> {
    pub archetype: DagArchetype,
    pub epsilon: S,
    pub trials: usize,
    pub pool_size: usize,
    pub seed: u64,
    pub omega: usize,
    pub gamma: S,
    pub k: usize,
    pub depth: S,
    pub total_weight: S,
    pub mean_var_model: S,
    pub mean_var_topology: S,
    pub ratio: RatioBound<S>,
    pub bound: RatioBound<S>,
    pub model_variance_bound: S,
    /// Mean model variance is within 10% of ε².
    pub var_model_within_bound: bool,
    pub ratio_meets_bound: bool,
    /// Weights were uniform, as the bound's hypothesis requires.
    pub within_hypothesis: bool,
    pub quality_model: QualityModel,
    pub interpolation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SimReport<S> {
    pub rows: Vec<TrialRow<S>>,
    pub summary: SimSummary<S>,
}

fn sample_variance<S: Scalar>(xs: &[S]) -> S {
    let n = S::from_count(xs.len());
    let mean = xs.iter().copied().sum::<S>() / n;
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / (n - S::one())
}

/// Runs `cfg.trials` independent trials on one archetype DAG. Trial `i`
/// draws from a generator seeded with `seed + i`, so the same seed gives
/// the same rows whatever the thread count.
pub fn simulate_variance<S: Scalar>(cfg: &SimConfig<S>) -> Result<SimReport<S>, LabError> {
    if cfg.trials == 0 {
        return Err(LabError::Parameter("trials must be at least 1".into()));
    }
    if cfg.pool_size < 2 {
        return Err(LabError::Parameter("pool_size must be at least 2".into()));
    }
    if !(cfg.epsilon >= S::zero() && cfg.epsilon <= S::one()) {
        return Err(LabError::Parameter(format!("epsilon {} not in [0,1]", cfg.epsilon)));
    }
    let weights = if cfg.uniform_weights { WeightMode::Uniform(1.0) } else { WeightMode::Random };
    let dag = generate_archetype_with::<S>(cfg.archetype, weights)?;
    let metrics = compute_metrics(&dag, WidthMode::Exact)?;
    let model = AssumptionOne { c_tau: cfg.c_tau, ..AssumptionOne::default() };
    let offsets = model.scores(&metrics, S::zero());
    let s_star = S::lit(S_STAR);

    let rows: Vec<TrialRow<S>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
            let scores: Vec<S> =
                (0..cfg.pool_size).map(|_| s_star - cfg.epsilon * S::lit(rng.random::<f64>())).collect();
            let base = scores[0];
            let q: Vec<S> = TopologyKind::ALL.iter().map(|&k| base + offsets.get(k)).collect();
            TrialRow {
                trial,
                var_model: sample_variance(&scores),
                var_topology: sample_variance(&q),
                quality_parallel: q[0],
                quality_sequential: q[1],
                quality_hierarchical: q[2],
                quality_hybrid: q[3],
            }
        })
        .collect();

    let n = S::from_count(rows.len());
    let mean_var_model = rows.iter().map(|r| r.var_model).sum::<S>() / n;
    let mean_var_topology = rows.iter().map(|r| r.var_topology).sum::<S>() / n;
    let ratio = if mean_var_model > S::zero() {
        RatioBound::Finite(mean_var_topology / mean_var_model)
    } else {
        RatioBound::Diverges
    };
    let params = ConvergenceParams::from_metrics(&metrics, cfg.epsilon).with_c_tau(cfg.c_tau);
    let bound = variance_ratio_bound(&params)?;
    let model_bound = model_variance_bound(cfg.epsilon);

    let summary = SimSummary {
        archetype: cfg.archetype,
        epsilon: cfg.epsilon,
        trials: cfg.trials,
        pool_size: cfg.pool_size,
        seed: cfg.seed,
        omega: metrics.width_exact,
        gamma: metrics.coupling_density,
        k: metrics.vertex_count,
        depth: metrics.depth,
        total_weight: metrics.total_weight,
        mean_var_model,
        mean_var_topology,
        ratio,
        bound,
        model_variance_bound: model_bound,
        var_model_within_bound: mean_var_model <= model_bound * S::lit(1.1),
        ratio_meets_bound: ratio.at_least(bound),
        within_hypothesis: cfg.uniform_weights,
        quality_model: cfg.quality_model,
        interpolation: model.describe(),
    };
    Ok(SimReport { rows, summary })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
