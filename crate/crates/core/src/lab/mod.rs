//! Scaling-law calculator, topology quality model, oracle routing and the
//! router-vs-oracle confusion matrix.
//!
//! The ratio bound is `(ω-1)²(1-γ)² / (4ε²k)`: how much more performance
//! variance topology choice causes than model choice, for a pool whose
//! models all score within ε of each other.

mod sim;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{compute_metrics, ArchetypeKind, DagArchetype, DagError, DagMetrics, TaskDag, WidthMode};
use crate::router::{route, RouterConfig, RouterError, TopologyKind, TopologyScores};
use crate::scalar::Scalar;

pub use sim::{loglog_slope, simulate_variance, QualityModel, SimConfig, SimReport, SimSummary, TrialRow};

/// Best score any model in a simulated pool reaches.
pub const S_STAR: f64 = 0.9;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("evaluator failed on {topology}: {message}")]
    Evaluator { topology: TopologyKind, message: String },
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Router(#[from] RouterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ConvergenceParams<S> {
    /// Score spread of the model pool.
    pub epsilon: S,
    /// Parallelism width.
    pub omega: S,
    /// Coupling density.
    pub gamma: S,
    /// Subtask count.
    pub k: usize,
    /// Topology quality coefficient C_τ.
    pub c_tau: S,
    /// Lipschitz constant of the task aggregation. Carried for
    /// completeness; none of the closed forms here depend on it.
    pub lipschitz: S,
}

impl<S: Scalar> ConvergenceParams<S> {
    pub fn new(epsilon: S, omega: S, gamma: S, k: usize) -> Self {
        Self { epsilon, omega, gamma, k, c_tau: S::lit(0.5), lipschitz: S::one() }
    }

    pub fn from_metrics(metrics: &DagMetrics<S>, epsilon: S) -> Self {
        Self::new(epsilon, S::from_count(metrics.width_exact), metrics.coupling_density, metrics.vertex_count)
    }

    pub fn with_c_tau(mut self, c_tau: S) -> Self {
        self.c_tau = c_tau;
        self
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Parameter(m));
        if !(self.epsilon >= S::zero() && self.epsilon <= S::one()) {
            return bad(format!("epsilon {} not in [0,1]", self.epsilon));
        }
        if !(self.omega >= S::one()) {
            return bad(format!("omega {} below 1", self.omega));
        }
        if !(self.gamma >= S::zero() && self.gamma <= S::one()) {
            return bad(format!("gamma {} not in [0,1]", self.gamma));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.c_tau > S::zero()) || !(self.lipschitz > S::zero()) {
            return bad("c_tau and lipschitz must be positive".into());
        }
        Ok(())
    }

    /// Whether `c_tau >= 1/(4k)`, the hypothesis the ratio bound is stated under.
    pub fn meets_hypothesis(&self) -> bool {
        self.c_tau >= S::one() / (S::lit(4.0) * S::from_count(self.k))
    }
}

/// A variance ratio that is either finite or unbounded (ε = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", bound = "S: Scalar")]
pub enum RatioBound<S> {
    Finite(S),
    Diverges,
}

impl<S: Scalar> RatioBound<S> {
    pub fn finite(self) -> Option<S> {
        match self {
            RatioBound::Finite(x) => Some(x),
            RatioBound::Diverges => None,
        }
    }

    /// `self >= other`, with `Diverges` above every finite value.
    pub fn at_least(self, other: RatioBound<S>) -> bool {
        match (self, other) {
            (RatioBound::Diverges, _) => true,
            (RatioBound::Finite(_), RatioBound::Diverges) => false,
            (RatioBound::Finite(a), RatioBound::Finite(b)) => a >= b,
        }
    }
}

impl<S: Scalar> fmt::Display for RatioBound<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatioBound::Finite(x) => write!(f, "{:.3}", x.as_f64()),
            RatioBound::Diverges => f.write_str("diverges"),
        }
    }
}

/// `(ω-1)²(1-γ)² / (4ε²k)`; `Diverges` when ε = 0, whatever ω is.
pub fn variance_ratio_bound<S: Scalar>(p: &ConvergenceParams<S>) -> Result<RatioBound<S>, LabError> {
    p.validate()?;
    if p.epsilon == S::zero() {
        return Ok(RatioBound::Diverges);
    }
    let spread = (p.omega - S::one()) * (S::one() - p.gamma);
    let value = spread * spread / (S::lit(4.0) * p.epsilon * p.epsilon * S::from_count(p.k));
    Ok(RatioBound::Finite(value))
}

/// Upper bound on model-choice variance for an ε-convergent pool: ε².
pub fn model_variance_bound<S: Scalar>(epsilon: S) -> S {
    epsilon * epsilon
}

/// Modeled parallel-vs-sequential quality gap `C_τ(ω-1)(1-γ)`.
pub fn topology_quality_gap<S: Scalar>(p: &ConvergenceParams<S>) -> S {
    p.c_tau * (p.omega - S::one()) * (S::one() - p.gamma)
}

/// Scores a DAG under one topology. Used for oracle routing.
pub trait Evaluator<S: Scalar>: Sync {
    fn evaluate(&self, dag: &TaskDag<S>, topology: TopologyKind) -> Result<S, String>;
}

/// Quality model built on the parallel/sequential gap.
///
/// With `gap = C_τ(ω-1)(1-γ)` and a per-model `base`:
/// Sequential = base; Parallel = base + gap when γ < 0.5, base - gap
/// otherwise; Hybrid = base + gap·(1 - δ/Σw); Hierarchical =
/// base + gap/2 - `arbitration_penalty`. Parallel additionally loses
/// `precedence_penalty` when the DAG has edges, since it ignores them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct AssumptionOne<S> {
    pub c_tau: S,
    pub base: S,
    pub arbitration_penalty: S,
    pub precedence_penalty: S,
}

impl<S: Scalar> Default for AssumptionOne<S> {
    fn default() -> Self {
        Self { c_tau: S::lit(0.5), base: S::lit(S_STAR), arbitration_penalty: S::lit(0.05), precedence_penalty: S::zero() }
    }
}

impl<S: Scalar> AssumptionOne<S> {
    /// The model used as a routing oracle: a parallel run that drops
    /// dependency edges costs 0.05.
    pub fn oracle() -> Self {
        Self { precedence_penalty: S::lit(0.05), ..Self::default() }
    }

    /// The quality rules in words, for simulation metadata.
    pub fn describe(&self) -> String {
        format!(
            "gap=c_tau*(omega-1)*(1-gamma), c_tau={}; sequential=base; parallel=base+gap if gamma<0.5 else base-gap, \
             minus {} when edges exist; hybrid=base+gap*(1-depth/total_weight); hierarchical=base+0.5*gap-{}",
            self.c_tau, self.precedence_penalty, self.arbitration_penalty
        )
    }

    /// Per-topology quality for a model scoring `base`.
    pub fn scores(&self, metrics: &DagMetrics<S>, base: S) -> TopologyScores<S> {
        let p = ConvergenceParams::from_metrics(metrics, S::zero()).with_c_tau(self.c_tau);
        let gap = topology_quality_gap(&p);
        let half = S::lit(0.5);
        TopologyScores::from_fn(|kind| match kind {
            TopologyKind::Sequential => base,
            TopologyKind::Parallel => {
                let signed = if metrics.coupling_density < half { gap } else { -gap };
                let penalty = if metrics.edge_count > 0 { self.precedence_penalty } else { S::zero() };
                base + signed - penalty
            }
            TopologyKind::Hybrid => base + gap * (S::one() - metrics.depth / metrics.total_weight),
            TopologyKind::Hierarchical => base + gap * half - self.arbitration_penalty,
        })
    }
}

impl<S: Scalar> Evaluator<S> for AssumptionOne<S> {
    fn evaluate(&self, dag: &TaskDag<S>, topology: TopologyKind) -> Result<S, String> {
        let metrics = compute_metrics(dag, WidthMode::Exact).map_err(|e| e.to_string())?;
        Ok(self.scores(&metrics, self.base).get(topology))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct OracleChoice<S> {
    pub best: TopologyKind,
    pub scores: TopologyScores<S>,
}

/// Evaluates all four topologies and picks the best; ties go to the
/// order Parallel, Sequential, Hierarchical, Hybrid.
pub fn oracle_route<S: Scalar>(dag: &TaskDag<S>, evaluator: &dyn Evaluator<S>) -> Result<OracleChoice<S>, LabError> {
    let mut raw = [S::zero(); 4];
    for kind in TopologyKind::ALL {
        raw[kind.index()] = evaluator
            .evaluate(dag, kind)
            .map_err(|message| LabError::Evaluator { topology: kind, message })?;
    }
    let scores = TopologyScores::from_fn(|k| raw[k.index()]);
    Ok(OracleChoice { best: scores.best(), scores })
}

/// Router choice (rows) against oracle choice (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 4]; 4],
}

impl ConfusionMatrix {
    pub fn add(&mut self, router: TopologyKind, oracle: TopologyKind) {
        self.counts[router.index()][oracle.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    /// Diagonal fraction; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> [usize; 4] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn column_sums(&self) -> [usize; 4] {
        std::array::from_fn(|j| self.counts.iter().map(|r| r[j]).sum())
    }

    /// Plain-text grid: rows are router choices, columns oracle choices.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16}", "Router \\ Oracle");
        for k in TopologyKind::ALL {
            out.push_str(&format!("{:>8}", format!("τ_{}", k.short())));
        }
        out.push('\n');
        for r in TopologyKind::ALL {
            out.push_str(&format!("{:<16}", format!("τ_{}", r.short())));
            for c in TopologyKind::ALL {
                out.push_str(&format!("{:>8}", self.counts[r.index()][c.index()]));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "Overall router accuracy: {:.1}% ({}/{})\n",
            100.0 * self.accuracy(),
            self.correct(),
            self.total()
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("router,oracle_P,oracle_S,oracle_H,oracle_X\n");
        for r in TopologyKind::ALL {
            let cells: Vec<String> = self.counts[r.index()].iter().map(usize::to_string).collect();
            out.push_str(&format!("{},{}\n", r.short(), cells.join(",")));
        }
        out
    }
}

/// `count` archetype specs cycling through the four shapes, with sizes
/// drawn from 3..=12 and per-task seeds derived from `seed`.
pub fn mixed_archetypes(count: usize, seed: u64) -> Vec<DagArchetype> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = ArchetypeKind::ALL[i % ArchetypeKind::ALL.len()];
            DagArchetype::new(kind, rng.random_range(3..=12), seed.wrapping_add(i as u64))
        })
        .collect()
}

pub fn confusion_matrix<S: Scalar>(
    tasks: &[TaskDag<S>],
    config: &RouterConfig<S>,
    evaluator: &dyn Evaluator<S>,
) -> Result<ConfusionMatrix, LabError> {
    if tasks.is_empty() {
        return Err(LabError::Parameter("confusion matrix over no tasks".into()));
    }
    let mut m = ConfusionMatrix::default();
    for dag in tasks {
        let routed = route(dag, config)?.topology.kind();
        m.add(routed, oracle_route(dag, evaluator)?.best);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{generate_archetype_with, WeightMode};

    fn bound(omega: f64, gamma: f64, k: usize, eps: f64) -> f64 {
        variance_ratio_bound(&ConvergenceParams::new(eps, omega, gamma, k)).unwrap().finite().unwrap()
    }

    #[test]
    fn appendix_fixture() {
        assert!((bound(3.4, 0.35, 5, 0.05) - 48.672).abs() < 1e-9);
        assert!((bound(3.0, 0.4, 6, 0.05) - 24.0).abs() < 1e-9);
        assert_eq!(bound(1.0, 0.2, 7, 0.3), 0.0);
    }

    #[test]
    fn zero_epsilon_diverges() {
        let p = ConvergenceParams::new(0.0, 1.0, 0.5, 3);
        assert_eq!(variance_ratio_bound(&p).unwrap(), RatioBound::<f64>::Diverges);
        assert_eq!(RatioBound::<f64>::Diverges.to_string(), "diverges");
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(variance_ratio_bound(&ConvergenceParams::new(0.05, 0.5, 0.5, 3)).is_err());
        assert!(variance_ratio_bound(&ConvergenceParams::new(0.05, 2.0, 1.5, 3)).is_err());
        assert!(variance_ratio_bound(&ConvergenceParams::new(1.5, 2.0, 0.5, 3)).is_err());
        assert!(variance_ratio_bound(&ConvergenceParams::new(0.05, 2.0, 0.5, 0)).is_err());
    }

    #[test]
    fn bound_monotonicity_on_grids() {
        let grid = [0.01, 0.05, 0.1, 0.3, 0.7, 1.0];
        for w in [1.5, 2.0, 4.0, 9.0] {
            for &g in &[0.0, 0.3, 0.7, 0.95] {
                for k in [2, 5, 20] {
                    for pair in grid.windows(2) {
                        assert!(bound(w, g, k, pair[0]) > bound(w, g, k, pair[1]));
                    }
                    assert!(bound(w + 1.0, g, k, 0.05) > bound(w, g, k, 0.05));
                    assert!(bound(w, g + 0.04, k, 0.05) < bound(w, g, k, 0.05));
                    assert!(bound(w, g, k + 1, 0.05) < bound(w, g, k, 0.05));
                }
            }
        }
    }

    #[test]
    fn model_bound_and_gap() {
        assert!((model_variance_bound(0.05f64) - 0.0025).abs() < 1e-15);
        assert_eq!(model_variance_bound(0.0f64), 0.0);
        assert!((model_variance_bound(0.04f64) - 0.0016).abs() < 1e-15);
        let p = ConvergenceParams::new(0.05, 3.0, 0.4, 6);
        assert!((topology_quality_gap(&p) - 0.6f64).abs() < 1e-12);
        assert_eq!(topology_quality_gap(&ConvergenceParams::new(0.05, 1.0, 0.4, 6)), 0.0);
        assert_eq!(topology_quality_gap(&ConvergenceParams::new(0.05, 3.0, 1.0, 6)), 0.0);
    }

    #[test]
    fn hypothesis_check() {
        assert!(ConvergenceParams::new(0.05, 3.0, 0.4, 6).meets_hypothesis());
        assert!(!ConvergenceParams::new(0.05, 3.0, 0.4, 6).with_c_tau(0.01).meets_hypothesis());
    }

    #[test]
    fn oracle_prefers_parallel_on_low_coupling_fan_out() {
        let dag = generate_archetype_with::<f64>(DagArchetype::new(ArchetypeKind::WideShallow, 8, 1), WeightMode::Uniform(1.0))
            .unwrap()
            .map_couplings(|_| 0.3);
        let choice = oracle_route(&dag, &AssumptionOne::oracle()).unwrap();
        assert_eq!(choice.best, TopologyKind::Parallel);
    }

    #[test]
    fn oracle_prefers_sequential_on_chain() {
        let dag = generate_archetype_with::<f64>(DagArchetype::new(ArchetypeKind::Chain, 5, 1), WeightMode::Uniform(1.0)).unwrap();
        assert_eq!(oracle_route(&dag, &AssumptionOne::oracle()).unwrap().best, TopologyKind::Sequential);
    }

    struct Flat;
    impl Evaluator<f64> for Flat {
        fn evaluate(&self, _: &TaskDag<f64>, _: TopologyKind) -> Result<f64, String> {
            Ok(0.5)
        }
    }

    struct Broken;
    impl Evaluator<f64> for Broken {
        fn evaluate(&self, _: &TaskDag<f64>, t: TopologyKind) -> Result<f64, String> {
            if t == TopologyKind::Hybrid { Err("no stages".into()) } else { Ok(0.1) }
        }
    }

    #[test]
    fn ties_and_failures() {
        let dag = TaskDag::<f64>::builder().vertex("a", 1.0).vertex("b", 1.0).edge("a", "b", 0.3).build();
        assert_eq!(oracle_route(&dag, &Flat).unwrap().best, TopologyKind::Parallel);
        let err = oracle_route(&dag, &Broken).unwrap_err();
        assert!(matches!(err, LabError::Evaluator { topology: TopologyKind::Hybrid, .. }));
    }

    #[test]
    fn single_task_matrix() {
        let dag = TaskDag::<f64>::builder().vertex("a", 1.0).vertex("b", 1.0).edge("a", "b", 0.3).build();
        let m = confusion_matrix(&[dag], &RouterConfig::default(), &AssumptionOne::oracle()).unwrap();
        assert_eq!(m.total(), 1);
        assert_eq!(m.counts[1][1], 1);
        assert!(confusion_matrix::<f64>(&[], &RouterConfig::default(), &Flat).is_err());
    }

    #[test]
    fn table_layout() {
        let mut m = ConfusionMatrix::default();
        m.add(TopologyKind::Parallel, TopologyKind::Parallel);
        m.add(TopologyKind::Hybrid, TopologyKind::Parallel);
        let t = m.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("Router \\ Oracle"));
        for (line, k) in lines[1..5].iter().zip(["P", "S", "H", "X"]) {
            assert!(line.starts_with(&format!("τ_{k}")));
            assert_eq!(line.split_whitespace().count(), 5);
        }
        assert_eq!(lines[5], "Overall router accuracy: 50.0% (1/2)");
        assert_eq!(m.to_csv().lines().nth(4).unwrap(), "X,1,0,0,0");
    }
}
