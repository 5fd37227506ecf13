use serde::{Deserialize, Serialize};

use super::{width, DagError, TaskDag};
use crate::scalar::Scalar;

/// How the antichain width is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WidthMode {
    /// Largest longest-path layer; linear time, a lower bound on the width.
    #[default]
    Approximate,
    /// Maximum matching on the transitive closure; exact.
    Exact,
}

/// Structural properties of a task DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DagMetrics<S> {
    /// Maximum antichain size. Equal to `width_approx` when computed in
    /// approximate mode (see `width_is_exact`).
    pub width_exact: usize,
    pub width_approx: usize,
    pub width_is_exact: bool,
    /// Heaviest directed path, summing vertex weights.
    pub depth: S,
    /// Mean edge coupling; 0 for an edgeless graph.
    pub coupling_density: S,
    /// `width / vertex_count`.
    pub parallelism_ratio: S,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub total_weight: S,
}

impl<S: Scalar> DagMetrics<S> {
    /// The width used for routing decisions.
    pub fn width(&self) -> usize {
        self.width_exact
    }

    /// Sequential-to-critical-path time ratio.
    pub fn speedup_bound(&self) -> S {
        self.total_weight / self.depth
    }
}

pub fn compute_metrics<S: Scalar>(dag: &TaskDag<S>, mode: WidthMode) -> Result<DagMetrics<S>, DagError> {
    let st = dag.structure()?;
    let n = st.len();

    let mut finish = vec![S::zero(); n];
    for &v in &st.topo {
        let before = st.pred[v].iter().map(|&u| finish[u]).fold(S::zero(), S::max);
        finish[v] = before + dag.vertices[v].weight;
    }
    let depth = finish.iter().copied().fold(S::zero(), S::max);

    let layer = st.layer_of();
    let mut sizes = vec![0usize; layer.iter().max().map_or(0, |m| m + 1)];
    for &l in &layer {
        sizes[l] += 1;
    }
    let width_approx = sizes.iter().copied().max().unwrap_or(0);

    let (width_exact, width_is_exact) = match mode {
        WidthMode::Approximate => (width_approx, false),
        WidthMode::Exact => (width::exact_width(&st.succ), true),
    };

    let edge_count = dag.edges.len();
    let coupling_density = if edge_count == 0 {
        S::zero()
    } else {
        dag.edges.iter().map(|e| e.coupling).sum::<S>() / S::from_count(edge_count)
    };

    Ok(DagMetrics {
        width_exact,
        width_approx,
        width_is_exact,
        depth,
        coupling_density,
        parallelism_ratio: S::from_count(width_exact) / S::from_count(n),
        vertex_count: n,
        edge_count,
        total_weight: dag.total_weight(),
    })
}

/// Longest-path layering: sources form the first layer and every other
/// vertex sits one past its deepest predecessor. Ids within a layer are
/// sorted.
pub fn topological_layers<S: Scalar>(dag: &TaskDag<S>) -> Result<Vec<Vec<String>>, DagError> {
    let st = dag.structure()?;
    let layer = st.layer_of();
    let mut layers: Vec<Vec<String>> = vec![Vec::new(); layer.iter().max().map_or(0, |m| m + 1)];
    for (i, &l) in layer.iter().enumerate() {
        layers[l].push(dag.vertices[i].id.clone());
    }
    for l in &mut layers {
        l.sort();
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diamond(c: f64) -> TaskDag<f64> {
        TaskDag::builder()
            .vertex("a", 1.0)
            .vertex("b", 1.0)
            .vertex("c", 1.0)
            .vertex("d", 1.0)
            .edge("a", "b", c)
            .edge("a", "c", c)
            .edge("b", "d", c)
            .edge("c", "d", c)
            .build()
    }

    #[test]
    fn diamond_metrics() {
        let m = compute_metrics(&diamond(0.3), WidthMode::Exact).unwrap();
        assert_eq!(m.width_exact, 2);
        assert_eq!(m.width_approx, 2);
        assert!(m.width_is_exact);
        assert_relative_eq!(m.depth, 3.0);
        assert_relative_eq!(m.coupling_density, 0.3, epsilon = 1e-12);
        assert_relative_eq!(m.parallelism_ratio, 0.5);
    }

    #[test]
    fn chain_metrics() {
        let dag = TaskDag::<f64>::builder()
            .vertex("a", 2.0)
            .vertex("b", 3.0)
            .vertex("c", 5.0)
            .edge("a", "b", 0.3)
            .edge("b", "c", 0.7)
            .build();
        let m = compute_metrics(&dag, WidthMode::Exact).unwrap();
        assert_eq!(m.width_exact, 1);
        assert_relative_eq!(m.depth, 10.0);
        assert_relative_eq!(m.coupling_density, 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.speedup_bound(), 1.0);
    }

    #[test]
    fn isolated_vertices() {
        let dag = TaskDag::<f64>::builder()
            .vertex("a", 1.0)
            .vertex("b", 1.0)
            .vertex("c", 1.0)
            .vertex("d", 1.0)
            .build();
        let m = compute_metrics(&dag, WidthMode::Approximate).unwrap();
        assert_eq!(m.width_exact, 4);
        assert!(!m.width_is_exact);
        assert_eq!(m.depth, 1.0);
        assert_eq!(m.coupling_density, 0.0);
        assert_eq!(m.parallelism_ratio, 1.0);
    }

    #[test]
    fn approximate_width_can_undercount() {
        // layers {p, s0} {q, s1} {r}; {p, q, r} is an antichain spanning all three.
        let dag = TaskDag::<f64>::builder()
            .vertex("p", 1.0)
            .vertex("s0", 1.0)
            .vertex("q", 1.0)
            .vertex("s1", 1.0)
            .vertex("r", 1.0)
            .edge("s0", "q", 0.0)
            .edge("s0", "s1", 0.0)
            .edge("s1", "r", 0.0)
            .build();
        let m = compute_metrics(&dag, WidthMode::Exact).unwrap();
        assert_eq!(m.width_approx, 2);
        assert_eq!(m.width_exact, 3);
        assert_relative_eq!(m.parallelism_ratio, 0.6);
    }

    #[test]
    fn layers_of_shapes() {
        assert_eq!(
            topological_layers(&diamond(0.3)).unwrap(),
            vec![vec!["a".to_string()], vec!["b".into(), "c".into()], vec!["d".into()]]
        );
        let flat = TaskDag::<f64>::builder().vertex("c", 1.0).vertex("a", 1.0).vertex("b", 1.0).build();
        assert_eq!(topological_layers(&flat).unwrap(), vec![vec!["a", "b", "c"]]);
    }

    #[test]
    fn invalid_dag_rejected() {
        let dag = TaskDag::<f64>::builder()
            .vertex("a", 1.0)
            .vertex("b", 1.0)
            .edge("a", "b", 0.3)
            .edge("b", "a", 0.3)
            .build();
        assert!(matches!(compute_metrics(&dag, WidthMode::Exact), Err(DagError::Invalid(_))));
        assert!(topological_layers(&dag).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let dag = TaskDag::<f32>::builder().vertex("a", 2.5).vertex("b", 1.5).edge("a", "b", 0.7).build();
        let m = compute_metrics(&dag, WidthMode::Exact).unwrap();
        assert_eq!(m.depth, 4.0f32);
        assert_eq!(m.coupling_density, 0.7f32);
    }
}
