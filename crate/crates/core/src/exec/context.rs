use serde::{Deserialize, Serialize};

use super::backend::{whitespace_tokens, AgentOutput};
use crate::embed::Embedder;

/// Context assembled for one invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedContext {
    pub text: String,
    /// Included subtask ids, in rank order.
    pub included: Vec<String>,
    /// Predecessor ids left out because the budget ran out.
    pub dropped: Vec<String>,
    pub tokens: u64,
    /// Some included output had no reported usage; its length is a
    /// whitespace count.
    pub approximate: bool,
}

/// Token length of an output: reported completion tokens, else a
/// whitespace count (second field true).
pub fn output_tokens(output: &AgentOutput) -> (u64, bool) {
    if output.usage_reported {
        (output.completion_tokens, false)
    } else {
        (whitespace_tokens(&output.text), true)
    }
}

/// Ranks predecessor outputs by similarity to the target description and
/// takes them whole, best first, stopping at the first one that would
/// overflow `budget`. Equal relevance keeps input order.
pub fn merge_context(
    predecessors: &[&AgentOutput],
    target_description: &str,
    budget: u64,
    relevance: &dyn Embedder<f64>,
) -> MergedContext {
    let target = relevance.embed(target_description);
    let mut ranked: Vec<(f64, &AgentOutput)> = predecessors
        .iter()
        .map(|o| (crate::embed::cosine(&relevance.embed(&o.text), &target), *o))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut merged = MergedContext::default();
    let mut sections = Vec::new();
    let mut full = false;
    for (_, out) in ranked {
        let (len, approx) = output_tokens(out);
        if full || merged.tokens + len > budget {
            full = true;
            merged.dropped.push(out.subtask_id.clone());
            continue;
        }
        merged.tokens += len;
        merged.approximate |= approx;
        merged.included.push(out.subtask_id.clone());
        sections.push(format!("## {}\n{}", out.subtask_id, out.text));
    }
    merged.text = sections.join("\n\n");
    merged
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::embed::{FixtureEmbedder, HashedBagEmbedder};
    use crate::exec::BackendId;

    fn out(id: &str, text: &str, tokens: u64) -> AgentOutput {
        AgentOutput {
            subtask_id: id.into(),
            text: text.into(),
            prompt_tokens: 0,
            completion_tokens: tokens,
            usage_reported: true,
            latency: Duration::ZERO,
            backend: BackendId::new("mock", "m"),
        }
    }

    #[test]
    fn no_predecessors() {
        let m = merge_context(&[], "anything", 100, &HashedBagEmbedder::default());
        assert_eq!(m, MergedContext::default());
    }

    #[test]
    fn both_fit_best_first() {
        let a = out("a", "database schema migration", 10);
        let b = out("b", "frontend button colour", 10);
        let m = merge_context(&[&b, &a], "write the schema migration", 100, &HashedBagEmbedder::default());
        assert_eq!(m.included, vec!["a", "b"]);
        assert_eq!(m.tokens, 20);
        assert!(m.text.starts_with("## a\ndatabase"));
    }

    #[test]
    fn greedy_stops_at_first_overflow() {
        let e = FixtureEmbedder::new(2).with("target", vec![1.0, 0.0]).with("big", vec![1.0, 0.1]).with("small", vec![0.0, 1.0]);
        let big = out("big", "big", 800);
        let small = out("small", "small", 700);
        let m = merge_context(&[&small, &big], "target", 1000, &e);
        assert_eq!(m.included, vec!["big"]);
        assert_eq!(m.dropped, vec!["small"]);
        assert_eq!(m.tokens, 800);
    }

    #[test]
    fn unreported_usage_is_flagged() {
        let mut a = out("a", "one two three", 999);
        a.usage_reported = false;
        let m = merge_context(&[&a], "x", 5, &HashedBagEmbedder::default());
        assert_eq!(m.tokens, 3);
        assert!(m.approximate);
    }
}
