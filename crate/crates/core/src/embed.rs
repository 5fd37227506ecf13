//! Text embeddings and cosine similarity.
//!
//! Used for consistency scoring during synthesis and for ranking
//! predecessor outputs when a context window has to be truncated.

use std::collections::HashMap;

use crate::scalar::Scalar;

/// Deterministic text → vector map with a fixed output dimension.
pub trait Embedder<S: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<S>;

    fn similarity(&self, a: &str, b: &str) -> S {
        cosine(&self.embed(a), &self.embed(b))
    }
}

/// Cosine similarity clamped to [-1, 1]. A zero vector has similarity 0
/// with everything; bitwise-equal nonzero vectors score exactly 1.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "embedding dimensions differ");
    let (mut dot, mut na, mut nb) = (S::zero(), S::zero(), S::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    if a == b {
        return S::one();
    }
    (dot / (na.sqrt() * nb.sqrt())).max(-S::one()).min(S::one())
}

pub const DEFAULT_DIMENSION: usize = 256;

/// Hashed bag of lowercase alphanumeric tokens (FNV-1a into `dimension`
/// buckets), L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagEmbedder {
    dimension: usize,
}

impl HashedBagEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl<S: Scalar> Embedder<S> for HashedBagEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<S> {
        let mut v = vec![S::zero(); self.dimension];
        for tok in tokens(text) {
            v[(fnv1a(tok.as_bytes()) % self.dimension as u64) as usize] += S::one();
        }
        let norm = v.iter().map(|&x| x * x).sum::<S>().sqrt();
        if norm > S::zero() {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

/// Looks texts up in a fixed table; unknown texts map to the zero vector.
#[derive(Debug, Clone, Default)]
pub struct FixtureEmbedder<S> {
    dimension: usize,
    table: HashMap<String, Vec<S>>,
}

impl<S: Scalar> FixtureEmbedder<S> {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, table: HashMap::new() }
    }

    pub fn with(mut self, text: impl Into<String>, vector: Vec<S>) -> Self {
        assert_eq!(vector.len(), self.dimension, "fixture vector has wrong dimension");
        self.table.insert(text.into(), vector);
        self
    }
}

impl<S: Scalar> Embedder<S> for FixtureEmbedder<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<S> {
        self.table.get(text).cloned().unwrap_or_else(|| vec![S::zero(); self.dimension])
    }
}
