//! Task DAG analysis, topology routing, execution and output synthesis
//! for multi-agent orchestration.
//!
//! The numeric types are generic over [`scalar::Scalar`]; the aliases
//! below fix the scalar to `f64`.

pub mod accounting;
pub mod dag;
pub mod embed;
pub mod exec;
pub mod lab;
pub mod pipeline;
pub mod router;
pub mod runlog;
pub mod scalar;
pub mod synthesis;
pub mod templates;

pub type TaskDag = dag::TaskDag<f64>;
pub type Subtask = dag::Subtask<f64>;
pub type Edge = dag::Edge<f64>;
pub type DagMetrics = dag::DagMetrics<f64>;
pub type RouterConfig = router::RouterConfig<f64>;
pub type RoutingDecision = router::RoutingDecision<f64>;
pub type TopologyScores = router::TopologyScores<f64>;
pub type DevTask = router::DevTask<f64>;
pub type CalibrationResult = router::CalibrationResult<f64>;
pub type SynthesisConfig = synthesis::SynthesisConfig<f64>;
pub type SynthesisResult = synthesis::SynthesisResult<f64>;
pub type ConvergenceParams = lab::ConvergenceParams<f64>;
pub type RatioBound = lab::RatioBound<f64>;
pub type AssumptionOne = lab::AssumptionOne<f64>;
pub type SimConfig = lab::SimConfig<f64>;
pub type SimReport = lab::SimReport<f64>;
