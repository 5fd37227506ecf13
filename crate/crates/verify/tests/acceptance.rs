//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always print; exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toporoute_cli::commands::exec;
use toporoute_cli::commands::lab::ratio_text;
use toporoute::accounting::{cost_of, CostLedger, Phase, PricingTable};
use toporoute::dag::{
    compute_metrics, generate_archetype, generate_archetype_with, ArchetypeKind, DagArchetype, Edge, Subtask, TaskDag,
    WeightMode, WidthMode,
};
use toporoute::embed::HashedBagEmbedder;
use toporoute::exec::{AgentBackend, BackendId, Engine, ExecutionPlan, MockBackend, ScriptedBackend};
use toporoute::lab::{confusion_matrix, simulate_variance, AssumptionOne, RatioBound, SimConfig};
use toporoute::router::{route, RouterConfig, Topology, TopologyKind};
use toporoute::synthesis::{Reroute, Rerouted, SynthesisConfig, Synthesizer};
use toporoute::templates::Templates;

// Tolerances
const RATIO_TOL: f64 = 1e-3;
const VAR_M_FACTOR: f64 = 1.1;
const SLOPE_TOL: f64 = 0.15;
const SPEEDUP_FACTOR: f64 = 0.9;
const ROUTE_BUDGET: Duration = Duration::from_millis(50);

struct Outcome {
    failed: Vec<usize>,
}

impl Outcome {
    fn record(&mut self, n: usize, ok: bool, line: &str) {
        println!("{} {n:>2}. {line}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(n);
        }
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/fixtures")
}

/// What `toporoute ratio` prints, parsed back.
fn ratio_cli(omega: f64, gamma: f64, k: usize, eps: f64) -> Option<f64> {
    ratio_text(omega, gamma, k, eps, 0.5).ok()?.trim().parse().ok()
}

fn criterion_1(o: &mut Outcome) {
    let t = Instant::now();
    let a = ratio_cli(3.4, 0.35, 5, 0.05);
    let b = ratio_cli(3.0, 0.4, 6, 0.05);
    // (omega-1)^2 (1-gamma)^2 / (4 eps^2 k), by hand
    let want_a = 2.4 * 2.4 * 0.65 * 0.65 / (4.0 * 0.0025 * 5.0);
    let want_b = 2.0 * 2.0 * 0.6 * 0.6 / (4.0 * 0.0025 * 6.0);
    let ok = matches!((a, b), (Some(a), Some(b))
        if (a - 48.672).abs() <= RATIO_TOL && (a - want_a).abs() <= RATIO_TOL
            && (b - 24.0).abs() <= RATIO_TOL && (b - want_b).abs() <= RATIO_TOL && b >= 20.0);
    o.record(1, ok, &format!("ratio fixtures: {a:?} (48.672 +- {RATIO_TOL}), {b:?} (24.0, >= 20) in {:?}", t.elapsed()));
}

/// Reachability bitmasks for a DAG whose edges go from lower to higher index.
fn reach(n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    let mut r = vec![0u32; n];
    for u in (0..n).rev() {
        for &(a, b) in edges {
            if a == u {
                r[u] |= (1 << b) | r[b];
            }
        }
    }
    r
}

fn brute_antichain(n: usize, edges: &[(usize, usize)]) -> usize {
    let r = reach(n, edges);
    (1u32..1 << n)
        .filter(|&m| (0..n).all(|i| m & (1 << i) == 0 || r[i] & m == 0))
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

fn dag_from(n: usize, edges: &[(usize, usize, f64)], perm: &[usize]) -> TaskDag<f64> {
    let vertices = (0..n).map(|i| Subtask::new(format!("v{}", perm[i]), "", 1.0)).collect();
    let edges = edges
        .iter()
        .map(|&(u, v, c)| Edge { from: format!("v{}", perm[u]), to: format!("v{}", perm[v]), coupling: c })
        .collect();
    TaskDag::from_parts(vertices, edges)
}

fn criterion_2(o: &mut Outcome) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut exact_ok, mut approx_ok) = (0, 0);
    const CASES: usize = 5000;
    for _ in 0..CASES {
        let n = rng.random_range(1..=8);
        let p = rng.random::<f64>();
        let edges: Vec<(usize, usize)> =
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|_| rng.random::<f64>() < p).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v)| (u, v, 0.3)).collect();
        let m = compute_metrics(&dag_from(n, &weighted, &perm), WidthMode::Exact).unwrap();
        let want = brute_antichain(n, &edges);
        exact_ok += usize::from(m.width_exact == want);
        approx_ok += usize::from(m.width_approx <= m.width_exact);
    }
    let ok = exact_ok == CASES && approx_ok == CASES;
    o.record(
        2,
        ok,
        &format!("width oracle: exact {exact_ok}/{CASES}, approx <= exact {approx_ok}/{CASES} in {:?}", t.elapsed()),
    );
}

/// Routing rules written out on integer quantities with default thresholds.
fn longhand(n: usize, edges: &[(usize, usize, u32)], width: usize) -> TopologyKind {
    let e = edges.len() as u32;
    let tenths: u32 = edges.iter().map(|x| x.2).sum();
    if e == 0 {
        TopologyKind::Parallel
    } else if width == 1 {
        TopologyKind::Sequential
    } else if tenths > 6 * e && n > 5 {
        TopologyKind::Hierarchical
    } else if 2 * width > n && tenths <= 6 * e {
        TopologyKind::Parallel
    } else {
        TopologyKind::Hybrid
    }
}

fn longest_path_width(n: usize, edges: &[(usize, usize, u32)]) -> usize {
    let mut level = vec![0usize; n];
    for v in 0..n {
        for &(a, b, _) in edges {
            if b == v {
                level[v] = level[v].max(level[a] + 1);
            }
        }
    }
    (0..n).map(|l| level.iter().filter(|&&x| x == l).count()).max().unwrap()
}

fn criterion_3(o: &mut Outcome) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut total, mut agree, mut forced_bad) = (0usize, 0usize, 0usize);
    for mode in [WidthMode::Exact, WidthMode::Approximate] {
        let cfg = RouterConfig { width_mode: mode, ..RouterConfig::default() };
        for n in 1..=6usize {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
            let identity: Vec<usize> = (0..n).collect();
            for mask in 0u32..1 << pairs.len() {
                let edges: Vec<(usize, usize, u32)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &(u, v))| (u, v, [0, 3, 7, 10][rng.random_range(0..4)]))
                    .collect();
                let plain: Vec<(usize, usize)> = edges.iter().map(|&(u, v, _)| (u, v)).collect();
                let exact = brute_antichain(n, &plain);
                let width = match mode {
                    WidthMode::Exact => exact,
                    WidthMode::Approximate => longest_path_width(n, &edges),
                };
                let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v, c)| (u, v, c as f64 / 10.0)).collect();
                let got = route(&dag_from(n, &weighted, &identity), &cfg).unwrap().topology.kind();
                total += 1;
                agree += usize::from(got == longhand(n, &edges, width));
                let forced_wrong = (edges.is_empty() && got != TopologyKind::Parallel)
                    || (!edges.is_empty() && exact == 1 && got != TopologyKind::Sequential);
                forced_bad += usize::from(forced_wrong);
            }
        }
    }
    o.record(
        3,
        agree == total && forced_bad == 0,
        &format!("router truth table: {agree}/{total} agree, {forced_bad} forced-branch violations in {:?}", t.elapsed()),
    );
}

struct AdversarialReroute;

#[async_trait]
impl Reroute<f64> for AdversarialReroute {
    async fn reroute(&mut self, _gamma: f64) -> Result<Rerouted, String> {
        Ok(Rerouted { topology: Topology::Parallel, outputs: vec!["alpha beta".into(), "gamma delta".into()] })
    }
}

fn criterion_4(o: &mut Outcome) {
    let t = Instant::now();
    let rt = tokio::runtime::Builder::new_current_thread().enable_time().start_paused(true).build().unwrap();
    let embedder = HashedBagEmbedder::default();
    let templates = Templates::default();
    let mut worst = Vec::new();
    for tenth in 0..=10u32 {
        let gamma0 = tenth as f64 / 10.0;
        let arbiter = ScriptedBackend::from_json(r#"{"default": {"text": "omega sigma"}}"#).unwrap();
        let synth = Synthesizer {
            merge: &arbiter,
            arbiter: &arbiter,
            embedder: &embedder,
            templates: &templates,
            config: SynthesisConfig::new(gamma0),
        };
        let outputs = vec!["alpha beta".to_string(), "gamma delta".to_string()];
        let result = rt.block_on(synth.run(outputs, &Topology::Parallel, &mut AdversarialReroute)).unwrap();
        // ceil((1 - gamma0) / 0.2) = ceil((10 - tenth) / 2)
        let bound = (10 - tenth).div_ceil(2) as usize;
        if result.iterations > bound || result.iterations > 5 {
            worst.push(format!("gamma0={gamma0:.1}: {} > {bound}", result.iterations));
        }
    }
    let detail = if worst.is_empty() { "all within bound".to_owned() } else { worst.join(", ") };
    o.record(4, worst.is_empty(), &format!("termination bound over gamma0 grid: {detail} in {:?}", t.elapsed()));
}

fn criterion_5(o: &mut Outcome) {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in [ArchetypeKind::Diamond, ArchetypeKind::WideShallow] {
        let arche = DagArchetype::new(kind, 8, 42);
        let dag = generate_archetype_with::<f64>(arche, WeightMode::Uniform(1.0)).unwrap();
        let plain: Vec<(usize, usize)> = {
            let idx = |id: &str| dag.vertices().iter().position(|v| v.id == id).unwrap();
            dag.edges().iter().map(|e| (idx(&e.from), idx(&e.to))).collect()
        };
        // generated edges already point from lower to higher index
        let omega = brute_antichain(dag.vertices().len(), &plain) as f64;
        let gamma = dag.edges().iter().map(|e| e.coupling).sum::<f64>() / dag.edges().len() as f64;
        let k = dag.vertices().len() as f64;
        let mut pts = Vec::new();
        for eps in [0.01, 0.02, 0.05] {
            let mut cfg = SimConfig::new(arche, eps, 1000, 42);
            cfg.c_tau = 0.5;
            let s = simulate_variance(&cfg).unwrap().summary;
            let bound = (omega - 1.0).powi(2) * (1.0 - gamma).powi(2) / (4.0 * eps * eps * k);
            let ratio = match s.ratio {
                RatioBound::Finite(r) => r,
                RatioBound::Diverges => f64::INFINITY,
            };
            let var_ok = s.mean_var_model <= VAR_M_FACTOR * eps * eps;
            let ratio_ok = ratio >= bound;
            ok &= var_ok && ratio_ok;
            pts.push((eps.ln(), ratio.ln()));
            if !var_ok || !ratio_ok {
                lines.push(format!("{} eps={eps}: Var_M {:.3e}, ratio {ratio:.3} vs bound {bound:.3}", kind.as_str(), s.mean_var_model));
            }
        }
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        ok &= (slope + 2.0).abs() <= SLOPE_TOL;
        lines.push(format!("{} slope {slope:.3}", kind.as_str()));
    }
    o.record(5, ok, &format!("simulator self-consistency: {} in {:?}", lines.join("; "), t.elapsed()));
}

fn criterion_6(o: &mut Outcome) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_time().start_paused(true).build().unwrap();
    let dag = generate_archetype_with::<f64>(DagArchetype::new(ArchetypeKind::WideShallow, 9, 6), WeightMode::Uniform(1.0)).unwrap();
    let leaves = dag.edges().len();
    // star: root plus leaves, so total weight / critical path = (1 + leaves) / 2
    let bound = (1 + leaves) as f64 / 2.0;
    let mock: Arc<dyn AgentBackend> = Arc::new(MockBackend::new("m", Duration::from_secs(1)));
    let engine = Engine::new(vec![mock]);
    let wall = |topology: Topology| {
        let plan = ExecutionPlan::new(&dag, topology, &engine.pool_ids(), "speedup", 10_000).unwrap();
        rt.block_on(engine.execute(&dag, &plan)).unwrap().wall_clock
    };
    let seq = wall(Topology::Sequential);
    let par = wall(Topology::Parallel);
    let speedup = seq.as_secs_f64() / par.as_secs_f64();
    o.record(
        6,
        leaves == 8 && speedup >= SPEEDUP_FACTOR * bound,
        &format!("parallel speedup on {leaves} leaves: {speedup:.2} >= {SPEEDUP_FACTOR} x {bound:.2} ({seq:?} / {par:?})"),
    );
}

fn criterion_7(o: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 1000;
    let vertices = (0..n).map(|i| Subtask::new(format!("v{i}"), "", rng.random_range(100.0..2000.0))).collect();
    let mut edges: Vec<Edge<f64>> = Vec::new();
    for v in 1..n {
        let mut from: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(0..v)).collect();
        from.sort();
        from.dedup();
        for u in from {
            edges.push(Edge { from: format!("v{u}"), to: format!("v{v}"), coupling: [0.0, 0.3, 0.7, 1.0][rng.random_range(0..4)] });
        }
    }
    let dag = TaskDag::from_parts(vertices, edges);
    let cfg = RouterConfig { width_mode: WidthMode::Approximate, ..RouterConfig::default() };
    let mut times: Vec<Duration> = (0..100)
        .map(|_| {
            let t = Instant::now();
            route(&dag, &cfg).unwrap();
            t.elapsed()
        })
        .collect();
    times.sort();
    let median = times[50];
    o.record(7, median < ROUTE_BUDGET, &format!("routing 1000 vertices: median {median:?} < {ROUTE_BUDGET:?} over 100 runs"));
}

fn criterion_8(o: &mut Outcome) {
    let pricing = PricingTable::load(&fixtures().join("pricing.toml")).unwrap();
    let price = |model: &str, prompt: u64, completion: u64| {
        let mut ledger = CostLedger::new();
        ledger.record_usage(BackendId::new("api", model), prompt, completion, Phase::Execute);
        cost_of(&ledger, &pricing).unwrap()
    };
    let mini = price("gpt-4o-mini", 1_000_000, 0);
    let haiku = price("claude-3.5-haiku", 0, 1_000_000);
    let ok = mini.micros() == 150_000 && mini.is_whole_micros() && haiku.micros() == 4_000_000 && haiku.is_whole_micros();
    o.record(8, ok, &format!("cost fixture: gpt-4o-mini 1M in = ${mini}, claude-3.5-haiku 1M out = ${haiku}"));
}

fn criterion_9(o: &mut Outcome) {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("diamond.toml");
    let run = |dir: &Path| exec::run(&manifest, Some(dir.to_path_buf()));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ok_runs = run(&a).is_ok() && run(&b).is_ok();
    let same: Vec<bool> = ["trace.json", "ledger.json", "report.json"]
        .iter()
        .map(|f| matches!((std::fs::read(a.join(f)), std::fs::read(b.join(f))), (Ok(x), Ok(y)) if x == y && !x.is_empty()))
        .collect();
    o.record(
        9,
        ok_runs && same.iter().all(|&s| s),
        &format!("exec determinism on diamond: runs ok {ok_runs}, trace/ledger/report identical {same:?}"),
    );
}

fn criterion_10(o: &mut Outcome) {
    let mut tasks: Vec<TaskDag<f64>> = Vec::new();
    let mut expected = [0usize; 2];
    for n in 1..=8 {
        let b = (0..n).fold(TaskDag::builder(), |b, i| b.vertex(&format!("i{i}"), 50.0 * (i + 1) as f64));
        tasks.push(b.build());
        expected[0] += 1;
        tasks.push(generate_archetype(DagArchetype::new(ArchetypeKind::Chain, n + 1, n as u64)).unwrap());
        expected[1] += 1;
    }
    let m = confusion_matrix(&tasks, &RouterConfig::default(), &AssumptionOne::oracle()).unwrap();
    let diagonal: usize = (0..4).map(|i| m.counts[i][i]).sum();
    let table = m.to_table();
    let lines: Vec<&str> = table.lines().collect();
    let header_ok = lines.first().is_some_and(|h| ["τ_P", "τ_S", "τ_H", "τ_X"].iter().all(|c| h.contains(c)));
    let rows_ok = lines.len() >= 5
        && lines[1..5].iter().zip(["τ_P", "τ_S", "τ_H", "τ_X"]).all(|(l, lab)| {
            let cells: Vec<&str> = l.split_whitespace().collect();
            cells.len() == 5 && cells[0] == lab && cells[1..].iter().all(|c| c.parse::<usize>().is_ok())
        });
    let ok = diagonal == tasks.len()
        && m.counts[0][0] == expected[0]
        && m.counts[1][1] == expected[1]
        && header_ok
        && rows_ok;
    o.record(10, ok, &format!("forced-class confusion matrix: {diagonal}/{} on diagonal, 4x4 layout {}", tasks.len(), header_ok && rows_ok));
}

fn main() {
    let mut o = Outcome { failed: Vec::new() };
    criterion_1(&mut o);
    criterion_2(&mut o);
    criterion_3(&mut o);
    criterion_4(&mut o);
    criterion_5(&mut o);
    criterion_6(&mut o);
    criterion_7(&mut o);
    criterion_8(&mut o);
    criterion_9(&mut o);
    criterion_10(&mut o);
    if !o.failed.is_empty() {
        println!("failed criteria: {:?}", o.failed);
        std::process::exit(1);
    }
}
