//! Seeded synthetic DAGs in four shapes: chain, wide-shallow, deep-narrow
//! and diamond.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{coupling_from_label, CouplingLabel, DagError, Edge, Subtask, TaskDag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchetypeKind {
    Chain,
    WideShallow,
    DeepNarrow,
    Diamond,
}

impl ArchetypeKind {
    pub const ALL: [ArchetypeKind; 4] =
        [ArchetypeKind::Chain, ArchetypeKind::WideShallow, ArchetypeKind::DeepNarrow, ArchetypeKind::Diamond];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchetypeKind::Chain => "chain",
            ArchetypeKind::WideShallow => "wide-shallow",
            ArchetypeKind::DeepNarrow => "deep-narrow",
            ArchetypeKind::Diamond => "diamond",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s || k.as_str().replace('-', "_") == s)
    }

    fn min_size(self) -> usize {
        match self {
            ArchetypeKind::Diamond => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagArchetype {
    pub kind: ArchetypeKind,
    pub size: usize,
    pub seed: u64,
}

impl DagArchetype {
    pub fn new(kind: ArchetypeKind, size: usize, seed: u64) -> Self {
        Self { kind, size, seed }
    }
}

/// Vertex weight policy for generated DAGs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// Uniform draw from [100, 2000] tokens.
    Random,
    /// Every vertex gets the same weight.
    Uniform(f64),
}

pub const MIN_WEIGHT: f64 = 100.0;
pub const MAX_WEIGHT: f64 = 2000.0;

pub fn generate_archetype<S: Scalar>(spec: DagArchetype) -> Result<TaskDag<S>, DagError> {
    generate_archetype_with(spec, WeightMode::Random)
}

/// Builds the archetype shape. Each non-source vertex draws one coupling
/// label, applied to all of its incoming edges.
pub fn generate_archetype_with<S: Scalar>(spec: DagArchetype, weights: WeightMode) -> Result<TaskDag<S>, DagError> {
    let DagArchetype { kind, size, seed } = spec;
    if size < kind.min_size() {
        return Err(DagError::ArchetypeTooSmall { kind, size, min: kind.min_size() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pairs: Vec<(usize, usize)> = match kind {
        ArchetypeKind::Chain => (1..size).map(|i| (i - 1, i)).collect(),
        ArchetypeKind::WideShallow => (1..size).map(|i| (0, i)).collect(),
        ArchetypeKind::DeepNarrow => {
            // spine v0..v{L-1}, side leaves v{L}.. hang off the first spine vertices
            let spine = size.div_ceil(2);
            let mut pairs: Vec<(usize, usize)> = (1..spine).map(|i| (i - 1, i)).collect();
            pairs.extend((0..size - spine).map(|j| (j, spine + j)));
            pairs
        }
        ArchetypeKind::Diamond => {
            let sink = size - 1;
            let mut pairs: Vec<(usize, usize)> = (1..sink).map(|i| (0, i)).collect();
            pairs.extend((1..sink).map(|i| (i, sink)));
            pairs
        }
    };

    let mut vertices = Vec::with_capacity(size);
    for i in 0..size {
        let weight = match weights {
            WeightMode::Random => rng.random_range(MIN_WEIGHT..=MAX_WEIGHT),
            WeightMode::Uniform(w) => w,
        };
        let label = CouplingLabel::ALL[rng.random_range(0..4)];
        vertices.push(
            Subtask::new(format!("v{i}"), format!("{} step {i}", kind.as_str()), S::lit(weight))
                .with_coupling(label),
        );
    }
    // sources carry no incoming edge; their label is irrelevant
    for (i, v) in vertices.iter_mut().enumerate() {
        if !pairs.iter().any(|&(_, to)| to == i) {
            v.coupling = CouplingLabel::None;
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(from, to)| Edge {
            from: vertices[from].id.clone(),
            to: vertices[to].id.clone(),
            coupling: coupling_from_label(vertices[to].coupling),
        })
        .collect();
    Ok(TaskDag::from_parts(vertices, edges))
}
