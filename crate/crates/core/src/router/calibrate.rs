use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{route, RouterConfig, RouterError, TopologyKind};
use crate::dag::TaskDag;
use crate::scalar::{robust_ceil, Scalar};

pub const DEFAULT_GAMMA_GRID: [f64; 6] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
const PREFERRED_GAMMA: f64 = 0.6;

/// A development task with a quality score per topology, supplied by
/// the caller (simulator output or logged real runs).
#[derive(Debug, Clone)]
pub struct DevTask<S> {
    pub dag: TaskDag<S>,
    pub scores: TopologyScores<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TopologyScores<S> {
    pub parallel: S,
    pub sequential: S,
    pub hierarchical: S,
    pub hybrid: S,
}

impl<S: Scalar> TopologyScores<S> {
    pub fn from_fn(mut f: impl FnMut(TopologyKind) -> S) -> Self {
        Self {
            parallel: f(TopologyKind::Parallel),
            sequential: f(TopologyKind::Sequential),
            hierarchical: f(TopologyKind::Hierarchical),
            hybrid: f(TopologyKind::Hybrid),
        }
    }

    pub fn get(&self, kind: TopologyKind) -> S {
        match kind {
            TopologyKind::Parallel => self.parallel,
            TopologyKind::Sequential => self.sequential,
            TopologyKind::Hierarchical => self.hierarchical,
            TopologyKind::Hybrid => self.hybrid,
        }
    }

    /// Highest score; ties go to the earliest kind in `TopologyKind::ALL`.
    pub fn best(&self) -> TopologyKind {
        let mut best = TopologyKind::Parallel;
        for kind in TopologyKind::ALL {
            if self.get(kind) > self.get(best) {
                best = kind;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CalibrationResult<S> {
    pub chosen: S,
    /// (candidate theta_gamma, mean quality of the routed topology)
    pub table: Vec<(S, S)>,
}

/// Grid search over `theta_gamma`: routes each dev task under every
/// candidate and averages the quality of the chosen topology. Ties go to
/// 0.6, then to the larger candidate.
pub fn calibrate_gamma<S: Scalar>(
    dev: &[DevTask<S>],
    grid: &[S],
    base: &RouterConfig<S>,
) -> Result<CalibrationResult<S>, RouterError> {
    if dev.is_empty() {
        return Err(RouterError::Parameter("empty dev set".into()));
    }
    if grid.is_empty() {
        return Err(RouterError::Parameter("empty theta_gamma grid".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &theta in grid {
        let cfg = base.with_theta_gamma(theta);
        let mut total = S::zero();
        for task in dev {
            let decision = route(&task.dag, &cfg)?;
            total += task.scores.get(decision.topology.kind());
        }
        table.push((theta, total / S::from_count(dev.len())));
    }

    let tol = S::lit(1e-12);
    let best = table.iter().map(|&(_, q)| q).fold(S::neg_infinity(), S::max);
    let tied: Vec<S> = table.iter().filter(|&&(_, q)| best - q <= tol).map(|&(t, _)| t).collect();
    let preferred = S::lit(PREFERRED_GAMMA);
    let chosen = tied
        .iter()
        .copied()
        .find(|&t| (t - preferred).abs() <= S::lit(1e-9))
        .unwrap_or_else(|| tied.iter().copied().fold(S::neg_infinity(), S::max));
    Ok(CalibrationResult { chosen, table })
}

/// Seeded dev/test split: `ceil(fraction * n)` items go to dev. Both
/// halves keep the input order.
pub fn split_dev_test<T: Clone>(ids: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), RouterError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(RouterError::Parameter(format!("dev fraction {fraction} not in (0,1)")));
    }
    let n = ids.len();
    let dev_len = (robust_ceil(fraction * n as f64) as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_dev = vec![false; n];
    for &i in &order[..dev_len] {
        in_dev[i] = true;
    }
    let (mut dev, mut test) = (Vec::with_capacity(dev_len), Vec::with_capacity(n - dev_len));
    for (i, id) in ids.iter().enumerate() {
        if in_dev[i] {
            dev.push(id.clone());
        } else {
            test.push(id.clone());
        }
    }
    Ok((dev, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{generate_archetype, ArchetypeKind, DagArchetype};

    #[test]
    fn split_sizes() {
        let ids: Vec<u32> = (0..500).collect();
        let (dev, test) = split_dev_test(&ids, 0.15, 42).unwrap();
        assert_eq!((dev.len(), test.len()), (75, 425));
        let ids: Vec<u32> = (0..198).collect();
        assert_eq!(split_dev_test(&ids, 0.15, 42).unwrap().0.len(), 30);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ids: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
        let a = split_dev_test(&ids, 0.15, 42).unwrap();
        let b = split_dev_test(&ids, 0.15, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|d| !a.1.contains(d)));
        assert_eq!(a.0.len() + a.1.len(), 100);
        assert_ne!(split_dev_test(&ids, 0.15, 43).unwrap().0, a.0);
        assert!(split_dev_test(&ids, 1.0, 42).is_err());
    }

    fn dev_set(scores: TopologyScores<f64>) -> Vec<DevTask<f64>> {
        ArchetypeKind::ALL
            .into_iter()
            .enumerate()
            .map(|(i, kind)| DevTask {
                dag: generate_archetype(DagArchetype::new(kind, 7, i as u64)).unwrap(),
                scores,
            })
            .collect()
    }

    #[test]
    fn single_grid_value_is_returned() {
        let s = TopologyScores { parallel: 0.1, sequential: 0.2, hierarchical: 0.3, hybrid: 0.4 };
        let r = calibrate_gamma(&dev_set(s), &[0.45], &RouterConfig::default()).unwrap();
        assert_eq!(r.chosen, 0.45);
        assert_eq!(r.table.len(), 1);
    }

    #[test]
    fn equal_scores_pick_default() {
        let s = TopologyScores { parallel: 0.5, sequential: 0.5, hierarchical: 0.5, hybrid: 0.5 };
        let r = calibrate_gamma(&dev_set(s), &DEFAULT_GAMMA_GRID, &RouterConfig::default()).unwrap();
        assert_eq!(r.chosen, 0.6);
        assert_eq!(r.table.len(), 6);
    }

    #[test]
    fn ties_without_default_pick_larger() {
        let s = TopologyScores { parallel: 0.5, sequential: 0.5, hierarchical: 0.5, hybrid: 0.5 };
        let r = calibrate_gamma(&dev_set(s), &[0.3, 0.7], &RouterConfig::default()).unwrap();
        assert_eq!(r.chosen, 0.7);
    }

    #[test]
    fn empty_inputs_rejected() {
        let s = TopologyScores { parallel: 0.5, sequential: 0.5, hierarchical: 0.5, hybrid: 0.5 };
        assert!(calibrate_gamma::<f64>(&[], &[0.5], &RouterConfig::default()).is_err());
        assert!(calibrate_gamma(&dev_set(s), &[], &RouterConfig::default()).is_err());
    }

    #[test]
    fn best_tie_order() {
        let s = TopologyScores { parallel: 0.5, sequential: 0.5, hierarchical: 0.5, hybrid: 0.5 };
        assert_eq!(s.best(), TopologyKind::Parallel);
        let s = TopologyScores { parallel: 0.4, sequential: 0.5, hierarchical: 0.6, hybrid: 0.6 };
        assert_eq!(s.best(), TopologyKind::Hierarchical);
    }
}
