//! Consistency scoring and the adaptive synthesis loop.
//!
//! Parallel outputs are merged when they agree; otherwise an arbiter
//! reconciles them, and if the arbiter's answer still disagrees with the
//! originals the task is re-routed with a higher coupling estimate. The
//! coupling rises by `step` per round, so the loop runs at most
//! `ceil((1 - gamma0) / step)` rounds.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine, Embedder};
use crate::exec::{AgentBackend, AgentOutput, AgentRequest, BackendError};
use crate::router::{Topology, TopologyKind};
use crate::scalar::{robust_ceil, Scalar};
use crate::templates::{render, Templates};

pub const MERGE_KEY: &str = "merge";
pub const ARBITER_KEY: &str = "arbiter";

#[derive(Debug, Error)]
pub enum SynthesisError<S: Scalar> {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{role} agent failed: {error}")]
    Backend { role: &'static str, error: BackendError, trail: Vec<RouteStep<S>> },
    #[error("re-route failed: {message}")]
    Reroute { message: String, trail: Vec<RouteStep<S>> },
}

/// Mean pairwise cosine similarity of the outputs' embeddings. A single
/// output scores 1.
pub fn consistency_score<S: Scalar, T: AsRef<str>>(outputs: &[T], embedder: &dyn Embedder<S>) -> Result<S, SynthesisError<S>> {
    if outputs.is_empty() {
        return Err(SynthesisError::Parameter("consistency of an empty output list".into()));
    }
    if outputs.len() == 1 {
        return Ok(S::one());
    }
    let vectors: Vec<Vec<S>> = outputs.iter().map(|o| embedder.embed(o.as_ref())).collect();
    let mut sims = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            sims.push(pair_similarity(outputs[i].as_ref(), outputs[j].as_ref(), &vectors[i], &vectors[j]));
        }
    }
    // summing in sorted order makes the result independent of input order
    sims.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mean = sims.iter().copied().sum::<S>() / S::from_count(sims.len());
    Ok(mean.max(-S::one()).min(S::one()))
}

/// Identical texts agree even when their embedding is the zero vector.
fn pair_similarity<S: Scalar>(a: &str, b: &str, va: &[S], vb: &[S]) -> S {
    if a == b {
        S::one()
    } else {
        cosine(va, vb)
    }
}

/// Mean cosine similarity between a candidate and each original.
pub fn consistency_of_candidate<S: Scalar, T: AsRef<str>>(
    candidate: &str,
    originals: &[T],
    embedder: &dyn Embedder<S>,
) -> Result<S, SynthesisError<S>> {
    if originals.is_empty() {
        return Err(SynthesisError::Parameter("candidate scored against no originals".into()));
    }
    let c = embedder.embed(candidate);
    let sum: S = originals.iter().map(|o| pair_similarity(candidate, o.as_ref(), &c, &embedder.embed(o.as_ref()))).sum();
    Ok((sum / S::from_count(originals.len())).max(-S::one()).min(S::one()))
}

/// Upper bound on synthesis rounds for a starting coupling `gamma0`:
/// `ceil((1 - gamma0) / step)`, but at least one round.
pub fn round_bound<S: Scalar>(gamma0: S, step: S) -> usize {
    robust_ceil((S::one() - gamma0) / step).to_usize().unwrap_or(0).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SynthesisConfig<S> {
    /// Consistency threshold in [0, 1].
    pub theta_cs: S,
    /// Coupling density the task was first routed with.
    pub gamma0: S,
    /// Coupling increment per re-route.
    pub step: S,
}

impl<S: Scalar> SynthesisConfig<S> {
    pub fn new(gamma0: S) -> Self {
        Self { theta_cs: S::lit(0.8), gamma0, step: S::lit(0.2) }
    }

    pub fn with_theta_cs(mut self, theta_cs: S) -> Self {
        self.theta_cs = theta_cs;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RouteStep<S> {
    pub gamma: S,
    pub topology: TopologyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SynthesisResult<S> {
    pub final_text: String,
    pub consistency: S,
    /// Synthesis rounds run, counting the first.
    pub iterations: usize,
    pub reroutes: usize,
    /// One entry per round: the coupling used and the topology it chose.
    pub route_trail: Vec<RouteStep<S>>,
    /// The round bound ran out with the arbiter still inconsistent.
    pub escalated: bool,
    pub converged: bool,
    /// Merge and arbiter calls made, for cost accounting.
    pub agent_calls: Vec<AgentOutput>,
}

/// Result of re-executing a task under a new coupling estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Rerouted {
    pub topology: Topology,
    pub outputs: Vec<String>,
}

/// Re-routes and re-executes the task from scratch with coupling `gamma`.
#[async_trait]
pub trait Reroute<S: Scalar>: Send {
    async fn reroute(&mut self, gamma: S) -> Result<Rerouted, String>;
}

/// A re-route hook for callers that cannot re-execute; it fails when called.
pub struct NoReroute;

#[async_trait]
impl<S: Scalar> Reroute<S> for NoReroute {
    async fn reroute(&mut self, _gamma: S) -> Result<Rerouted, String> {
        Err("re-routing is not available".into())
    }
}

pub struct Synthesizer<'a, S: Scalar> {
    pub merge: &'a dyn AgentBackend,
    pub arbiter: &'a dyn AgentBackend,
    pub embedder: &'a dyn Embedder<S>,
    pub templates: &'a Templates,
    pub config: SynthesisConfig<S>,
}

fn numbered(outputs: &[String]) -> String {
    outputs.iter().enumerate().map(|(i, o)| format!("\n\n[{}]\n{o}", i + 1)).collect()
}

impl<S: Scalar> Synthesizer<'_, S> {
    /// Runs the synthesis loop over `outputs`, ordered by completion.
    /// Sequential and hierarchical topologies are terminal: their last
    /// output is the answer and no agent is called.
    pub async fn run(
        &self,
        outputs: Vec<String>,
        topology: &Topology,
        reroute: &mut dyn Reroute<S>,
    ) -> Result<SynthesisResult<S>, SynthesisError<S>> {
        let cfg = self.config;
        if !(cfg.theta_cs >= S::zero() && cfg.theta_cs <= S::one()) {
            return Err(SynthesisError::Parameter(format!("theta_cs {} not in [0,1]", cfg.theta_cs)));
        }
        if !(cfg.gamma0 >= S::zero() && cfg.gamma0 <= S::one()) {
            return Err(SynthesisError::Parameter(format!("gamma0 {} not in [0,1]", cfg.gamma0)));
        }
        if cfg.step <= S::zero() {
            return Err(SynthesisError::Parameter("gamma step must be positive".into()));
        }
        let bound = round_bound(cfg.gamma0, cfg.step);

        let mut outputs = outputs;
        let mut kind = topology.kind();
        let mut gamma = cfg.gamma0;
        let mut trail = Vec::new();
        let mut calls = Vec::new();
        let mut reroutes = 0;

        loop {
            if outputs.is_empty() {
                return Err(SynthesisError::Parameter("nothing to synthesize".into()));
            }
            trail.push(RouteStep { gamma, topology: kind });
            let done = |text: String, consistency: S, escalated: bool, trail: Vec<RouteStep<S>>, calls| SynthesisResult {
                final_text: text,
                consistency,
                iterations: trail.len(),
                reroutes,
                route_trail: trail,
                escalated,
                converged: !escalated,
                agent_calls: calls,
            };

            if matches!(kind, TopologyKind::Sequential | TopologyKind::Hierarchical) {
                let last = outputs.pop().expect("nonempty");
                return Ok(done(last, S::one(), false, trail, calls));
            }

            let cs = consistency_score(&outputs, self.embedder)?;
            if cs >= cfg.theta_cs {
                let req = AgentRequest {
                    subtask_id: MERGE_KEY.into(),
                    instruction: render(&self.templates.merge, &[("outputs", &numbered(&outputs))]),
                    context: String::new(),
                };
                let out = self.merge.invoke(&req).await.map_err(|error| SynthesisError::Backend {
                    role: "merge",
                    error,
                    trail: trail.clone(),
                })?;
                let text = out.text.clone();
                calls.push(out);
                return Ok(done(text, cs, false, trail, calls));
            }

            let req = AgentRequest {
                subtask_id: ARBITER_KEY.into(),
                instruction: render(&self.templates.arbiter, &[("outputs", &numbered(&outputs))]),
                context: String::new(),
            };
            let out = self.arbiter.invoke(&req).await.map_err(|error| SynthesisError::Backend {
                role: "arbiter",
                error,
                trail: trail.clone(),
            })?;
            let candidate = out.text.clone();
            calls.push(out);
            let cs_candidate = consistency_of_candidate(&candidate, &outputs, self.embedder)?;
            if cs_candidate >= cfg.theta_cs {
                return Ok(done(candidate, cs_candidate, false, trail, calls));
            }
            if trail.len() >= bound {
                return Ok(done(candidate, cs_candidate, true, trail, calls));
            }

            gamma = (gamma + cfg.step).min(S::one());
            let next = reroute
                .reroute(gamma)
                .await
                .map_err(|message| SynthesisError::Reroute { message, trail: trail.clone() })?;
            reroutes += 1;
            kind = next.topology.kind();
            outputs = next.outputs;
        }
    }
}
