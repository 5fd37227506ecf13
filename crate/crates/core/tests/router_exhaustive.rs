use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toporoute::dag::{Edge, Subtask, TaskDag, WidthMode};
use toporoute::router::{route, RouterConfig, Topology, TopologyKind};

/// Coupling levels in tenths, so the oracle can compare means exactly.
const TENTHS: [u32; 4] = [0, 3, 7, 10];

struct Case {
    n: usize,
    edges: Vec<(usize, usize, u32)>,
}

impl Case {
    fn dag(&self) -> TaskDag<f64> {
        let vertices = (0..self.n).map(|i| Subtask::new(format!("t{i}"), format!("step {i}"), 1.0)).collect();
        let edges = self
            .edges
            .iter()
            .map(|&(u, v, c)| Edge { from: format!("t{u}"), to: format!("t{v}"), coupling: c as f64 / 10.0 })
            .collect();
        TaskDag::from_parts(vertices, edges)
    }

    fn reach(&self) -> Vec<u32> {
        // edges only go from lower to higher index, so one backward sweep suffices
        let mut reach = vec![0u32; self.n];
        for u in (0..self.n).rev() {
            for &(a, b, _) in &self.edges {
                if a == u {
                    reach[u] |= (1 << b) | reach[b];
                }
            }
        }
        reach
    }

    fn exact_width(&self) -> usize {
        let reach = self.reach();
        (1u32..1 << self.n)
            .filter(|&m| (0..self.n).all(|i| m & (1 << i) == 0 || reach[i] & m == 0))
            .map(|m| m.count_ones() as usize)
            .max()
            .unwrap()
    }

    fn levels(&self) -> Vec<usize> {
        let mut level = vec![0; self.n];
        for v in 0..self.n {
            for &(a, b, _) in &self.edges {
                if b == v {
                    level[v] = level[v].max(level[a] + 1);
                }
            }
        }
        level
    }

    fn layers(&self) -> Vec<Vec<String>> {
        let level = self.levels();
        let m = level.iter().max().unwrap() + 1;
        (0..m).map(|l| (0..self.n).filter(|&v| level[v] == l).map(|v| format!("t{v}")).collect()).collect()
    }

    fn approx_width(&self) -> usize {
        self.layers().iter().map(Vec::len).max().unwrap()
    }
}

/// Routing rules with the default thresholds, written out longhand on
/// integer quantities: gamma > 0.6 is sum_tenths > 6|E|, r > 0.5 is 2w > n.
fn expected(case: &Case, width: usize) -> TopologyKind {
    let e = case.edges.len() as u32;
    let tenths: u32 = case.edges.iter().map(|x| x.2).sum();
    if e == 0 {
        return TopologyKind::Parallel;
    }
    if width == 1 {
        return TopologyKind::Sequential;
    }
    if tenths > 6 * e && case.n > 5 {
        return TopologyKind::Hierarchical;
    }
    if 2 * width > case.n && tenths <= 6 * e {
        return TopologyKind::Parallel;
    }
    TopologyKind::Hybrid
}

fn all_cases(seed: u64) -> impl Iterator<Item = Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=6usize).flat_map(move |n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let cases: Vec<Case> = (0u32..1 << pairs.len())
            .map(|mask| {
                let edges = pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &(u, v))| (u, v, TENTHS[rng.random_range(0..4)]))
                    .collect();
                Case { n, edges }
            })
            .collect();
        cases
    })
}

fn check_family(mode: WidthMode, seed: u64) -> usize {
    let cfg = RouterConfig { width_mode: mode, ..RouterConfig::default() };
    let mut count = 0;
    for case in all_cases(seed) {
        let width = match mode {
            WidthMode::Exact => case.exact_width(),
            WidthMode::Approximate => case.approx_width(),
        };
        let want = expected(&case, width);
        let got = route(&case.dag(), &cfg).unwrap();
        assert_eq!(got.topology.kind(), want, "n={} edges={:?}", case.n, case.edges);
        assert_eq!(got.fired_rule.topology_kind(), want);
        if want == TopologyKind::Hybrid {
            assert_eq!(got.topology, Topology::Hybrid { stages: case.layers() });
        }
        if case.edges.is_empty() {
            assert_eq!(got.topology, Topology::Parallel);
        } else if case.exact_width() == 1 {
            assert_eq!(got.topology, Topology::Sequential);
        }
        count += 1;
    }
    count
}

#[test]
fn exact_mode_matches_longhand_rules() {
    for seed in [1, 2] {
        assert_eq!(check_family(WidthMode::Exact, seed), 1 + 2 + 8 + 64 + 1024 + 32768);
    }
}

#[test]
fn approximate_mode_matches_longhand_rules() {
    check_family(WidthMode::Approximate, 3);
}

#[test]
fn routing_is_a_pure_function() {
    let cfg = RouterConfig::default();
    for case in all_cases(4).filter(|c| c.n == 5) {
        let dag = case.dag();
        let (a, b) = (route(&dag, &cfg).unwrap(), route(&dag, &cfg).unwrap());
        assert_eq!((a.topology, a.metrics, a.fired_rule), (b.topology, b.metrics, b.fired_rule));
    }
}

pub fn random_dag(n: usize, seed: u64) -> TaskDag<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = (0..n).map(|i| Subtask::new(format!("v{i}"), "", rng.random_range(100.0..2000.0))).collect();
    let mut edges = Vec::new();
    for v in 1..n {
        for _ in 0..rng.random_range(0..4) {
            let u = rng.random_range(0..v);
            if !edges.iter().any(|e: &Edge<f64>| e.from == format!("v{u}") && e.to == format!("v{v}")) {
                edges.push(Edge { from: format!("v{u}"), to: format!("v{v}"), coupling: [0.0, 0.3, 0.7, 1.0][rng.random_range(0..4)] });
            }
        }
    }
    TaskDag::from_parts(vertices, edges)
}

#[test]
fn thousand_vertex_routing_is_fast() {
    let dag = random_dag(1000, 42);
    let cfg = RouterConfig::default();
    let mut times: Vec<Duration> = (0..25)
        .map(|_| {
            let t = Instant::now();
            route(&dag, &cfg).unwrap();
            t.elapsed()
        })
        .collect();
    times.sort();
    assert!(times[times.len() / 2] < Duration::from_millis(50), "median {:?}", times[times.len() / 2]);
}
