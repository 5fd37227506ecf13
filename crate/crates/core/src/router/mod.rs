//! Topology routing: maps DAG metrics to one of four execution topologies.

mod calibrate;

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{compute_metrics, topological_layers, DagError, DagMetrics, TaskDag, WidthMode};
use crate::scalar::Scalar;

pub use calibrate::{calibrate_gamma, split_dev_test, CalibrationResult, DevTask, TopologyScores, DEFAULT_GAMMA_GRID};

#[derive(Debug, Error)]
pub enum RouterError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("invalid router config: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RouterConfig<S> {
    /// Parallelism-ratio threshold, in (0, 1].
    pub theta_omega: S,
    /// Coupling threshold, in [0, 1].
    pub theta_gamma: S,
    /// Minimum subtask count (exclusive) for hierarchical routing.
    pub theta_delta: usize,
    #[serde(default)]
    pub width_mode: WidthMode,
}

impl<S: Scalar> Default for RouterConfig<S> {
    fn default() -> Self {
        Self { theta_omega: S::lit(0.5), theta_gamma: S::lit(0.6), theta_delta: 5, width_mode: WidthMode::Approximate }
    }
}

impl<S: Scalar> RouterConfig<S> {
    pub fn validate(&self) -> Result<(), RouterError> {
        if !(self.theta_omega > S::zero() && self.theta_omega <= S::one()) {
            return Err(RouterError::Config(format!("theta_omega {} not in (0,1]", self.theta_omega)));
        }
        if !(self.theta_gamma >= S::zero() && self.theta_gamma <= S::one()) {
            return Err(RouterError::Config(format!("theta_gamma {} not in [0,1]", self.theta_gamma)));
        }
        if self.theta_delta == 0 {
            return Err(RouterError::Config("theta_delta must be positive".into()));
        }
        Ok(())
    }

    pub fn with_theta_gamma(mut self, theta_gamma: S) -> Self {
        self.theta_gamma = theta_gamma;
        self
    }

    /// Parses the TOML form (`theta_omega`, `theta_gamma`, `theta_delta`,
    /// `width_mode`); missing keys take the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, RouterError> {
        #[derive(Deserialize)]
        struct Partial {
            theta_omega: Option<f64>,
            theta_gamma: Option<f64>,
            theta_delta: Option<usize>,
            width_mode: Option<WidthMode>,
        }
        let p: Partial = toml::from_str(text).map_err(|e| RouterError::Config(e.to_string()))?;
        let d = Self::default();
        let cfg = Self {
            theta_omega: p.theta_omega.map(S::lit).unwrap_or(d.theta_omega),
            theta_gamma: p.theta_gamma.map(S::lit).unwrap_or(d.theta_gamma),
            theta_delta: p.theta_delta.unwrap_or(d.theta_delta),
            width_mode: p.width_mode.unwrap_or(d.width_mode),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RouterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RouterError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        format!(
            "theta_omega = {}\ntheta_gamma = {}\ntheta_delta = {}\nwidth_mode = \"{}\"\n",
            self.theta_omega.as_f64(),
            self.theta_gamma.as_f64(),
            self.theta_delta,
            match self.width_mode {
                WidthMode::Approximate => "approximate",
                WidthMode::Exact => "exact",
            }
        )
    }
}

/// Topology label without stage data. The declaration order is the fixed
/// tie-break order used by oracle routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Parallel,
    Sequential,
    Hierarchical,
    Hybrid,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] =
        [TopologyKind::Parallel, TopologyKind::Sequential, TopologyKind::Hierarchical, TopologyKind::Hybrid];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Parallel => "parallel",
            TopologyKind::Sequential => "sequential",
            TopologyKind::Hierarchical => "hierarchical",
            TopologyKind::Hybrid => "hybrid",
        }
    }

    /// Single-letter tag used in tables: P, S, H, X.
    pub fn short(self) -> &'static str {
        match self {
            TopologyKind::Parallel => "P",
            TopologyKind::Sequential => "S",
            TopologyKind::Hierarchical => "H",
            TopologyKind::Hybrid => "X",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TopologyKind::Parallel => "Parallel",
            TopologyKind::Sequential => "Sequential",
            TopologyKind::Hierarchical => "Hierarchical",
            TopologyKind::Hybrid => "Hybrid",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    Parallel,
    Sequential,
    Hierarchical,
    Hybrid { stages: Vec<Vec<String>> },
}

impl Topology {
    pub fn kind(&self) -> TopologyKind {
        match self {
            Topology::Parallel => TopologyKind::Parallel,
            Topology::Sequential => TopologyKind::Sequential,
            Topology::Hierarchical => TopologyKind::Hierarchical,
            Topology::Hybrid { .. } => TopologyKind::Hybrid,
        }
    }

    pub fn stages(&self) -> Option<&[Vec<String>]> {
        match self {
            Topology::Hybrid { stages } => Some(stages),
            _ => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Hybrid { stages } => write!(f, "Hybrid, stages {}", stages.len()),
            other => write!(f, "{}", other.kind()),
        }
    }
}

/// Which branch of the routing rules produced the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiredRule {
    /// No edges: fully parallel.
    NoEdges,
    /// Width one: fully sequential.
    SingleChain,
    /// High coupling and many subtasks: hierarchical.
    HighCoupling,
    /// Wide DAG with low coupling: parallel.
    WideLowCoupling,
    /// Fallthrough: hybrid over topological layers.
    Layered,
}

impl FiredRule {
    pub fn topology_kind(self) -> TopologyKind {
        match self {
            FiredRule::NoEdges | FiredRule::WideLowCoupling => TopologyKind::Parallel,
            FiredRule::SingleChain => TopologyKind::Sequential,
            FiredRule::HighCoupling => TopologyKind::Hierarchical,
            FiredRule::Layered => TopologyKind::Hybrid,
        }
    }
}

impl fmt::Display for FiredRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FiredRule::NoEdges => "no-edges (fully parallel)",
            FiredRule::SingleChain => "single-chain (fully sequential)",
            FiredRule::HighCoupling => "high-coupling + many subtasks",
            FiredRule::WideLowCoupling => "wide DAG, low coupling",
            FiredRule::Layered => "layered hybrid",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RoutingDecision<S> {
    pub topology: Topology,
    pub metrics: DagMetrics<S>,
    pub fired_rule: FiredRule,
    #[serde(with = "duration_micros")]
    pub elapsed: Duration,
}

/// Strict `a > b` that ignores float noise: a mean of couplings that is
/// 0.6 on paper can come out as 0.6000000000000001. The slack is
/// `sqrt(machine epsilon)`, about 1.5e-8 for `f64`.
fn exceeds<S: Scalar>(a: S, b: S) -> bool {
    a - b > S::epsilon().sqrt()
}

/// The routing rules on precomputed metrics. All comparisons are strict.
pub fn select_rule<S: Scalar>(metrics: &DagMetrics<S>, config: &RouterConfig<S>) -> FiredRule {
    let gamma = metrics.coupling_density;
    let high_coupling = exceeds(gamma, config.theta_gamma);
    if metrics.edge_count == 0 {
        FiredRule::NoEdges
    } else if metrics.width() == 1 {
        FiredRule::SingleChain
    } else if high_coupling && metrics.vertex_count > config.theta_delta {
        FiredRule::HighCoupling
    } else if exceeds(metrics.parallelism_ratio, config.theta_omega) && !high_coupling {
        FiredRule::WideLowCoupling
    } else {
        FiredRule::Layered
    }
}

pub fn route<S: Scalar>(dag: &TaskDag<S>, config: &RouterConfig<S>) -> Result<RoutingDecision<S>, RouterError> {
    route_with_coupling(dag, config, None)
}

/// Routes with the aggregate coupling density replaced by `coupling`
/// when given. Used by synthesis re-routing, which raises the estimate
/// without touching individual edges.
pub fn route_with_coupling<S: Scalar>(
    dag: &TaskDag<S>,
    config: &RouterConfig<S>,
    coupling: Option<S>,
) -> Result<RoutingDecision<S>, RouterError> {
    config.validate()?;
    let start = Instant::now();
    let mut metrics = compute_metrics(dag, config.width_mode)?;
    if let Some(g) = coupling {
        metrics.coupling_density = g.max(S::zero()).min(S::one());
    }
    let fired_rule = select_rule(&metrics, config);
    let topology = match fired_rule.topology_kind() {
        TopologyKind::Parallel => Topology::Parallel,
        TopologyKind::Sequential => Topology::Sequential,
        TopologyKind::Hierarchical => Topology::Hierarchical,
        TopologyKind::Hybrid => Topology::Hybrid { stages: topological_layers(dag)? },
    };
    Ok(RoutingDecision { topology, metrics, fired_rule, elapsed: start.elapsed() })
}

pub(crate) mod duration_micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}
