use std::time::Duration;

use proptest::prelude::*;
use toporoute::accounting::{cost_of, topology_distribution, CostLedger, Money, Phase, PricingTable, RunReport};
use toporoute::exec::{AgentOutput, BackendId};
use toporoute::router::TopologyKind;

const PRICING: &str = r#"
as_of = "2026-01-15"
currency = "USD"
[models."gpt-4o-mini"]
input = "0.15"
output = "0.60"
[models."claude-3.5-haiku"]
input = "0.80"
output = "4.00"
[models."gemini-2.0-flash"]
input = "0.10"
output = "0.40"
"#;

const MODELS: [&str; 3] = ["gpt-4o-mini", "claude-3.5-haiku", "gemini-2.0-flash"];

fn arb_entry() -> impl Strategy<Value = (usize, u64, u64, usize)> {
    (0..3usize, 0u64..5_000_000, 0u64..5_000_000, 0..4usize)
}

fn ledger(entries: &[(usize, u64, u64, usize)]) -> CostLedger {
    let mut l = CostLedger::new();
    for &(m, p, c, ph) in entries {
        let out = AgentOutput {
            subtask_id: "t".into(),
            text: String::new(),
            prompt_tokens: p,
            completion_tokens: c,
            usage_reported: true,
            latency: Duration::ZERO,
            backend: BackendId::new("p", MODELS[m]),
        };
        l.record(&out, Phase::ALL[ph]);
    }
    l
}

/// Independent price computation in rational dollars: numerator in
/// micro-dollars times tokens, over one million.
fn oracle_numerator(entries: &[(usize, u64, u64, usize)]) -> u128 {
    let rates = [(150_000u128, 600_000u128), (800_000, 4_000_000), (100_000, 400_000)];
    entries.iter().map(|&(m, p, c, _)| p as u128 * rates[m].0 + c as u128 * rates[m].1).sum()
}

proptest! {
    #[test]
    fn cost_is_linear_and_exact(a in prop::collection::vec(arb_entry(), 0..20), b in prop::collection::vec(arb_entry(), 0..20)) {
        let pricing = PricingTable::from_toml_str(PRICING).unwrap();
        let (ca, cb) = (cost_of(&ledger(&a), &pricing).unwrap(), cost_of(&ledger(&b), &pricing).unwrap());
        let mut ab = a.clone();
        ab.extend(&b);
        prop_assert_eq!(cost_of(&ledger(&ab), &pricing).unwrap(), ca + cb);
        let want = oracle_numerator(&ab);
        prop_assert_eq!(cost_of(&ledger(&ab), &pricing).unwrap().micros() as u128, (want + 500_000) / 1_000_000);
    }

    #[test]
    fn totals_ignore_order(mut a in prop::collection::vec(arb_entry(), 1..20), seed in any::<u64>()) {
        let pricing = PricingTable::from_toml_str(PRICING).unwrap();
        let before = ledger(&a);
        let n = a.len();
        for i in (1..n).rev() {
            a.swap(i, (seed as usize ^ i.wrapping_mul(31)) % (i + 1));
        }
        let after = ledger(&a);
        prop_assert_eq!(before.total_tokens(), after.total_tokens());
        prop_assert_eq!(before.by_phase(), after.by_phase());
        prop_assert_eq!(cost_of(&before, &pricing).unwrap(), cost_of(&after, &pricing).unwrap());
    }

    #[test]
    fn distribution_rows_sum_to_hundred(runs in prop::collection::vec((0..4usize, 0..4usize), 1..300)) {
        let labelled: Vec<(String, TopologyKind)> =
            runs.iter().map(|&(d, k)| (format!("domain{d}"), TopologyKind::ALL[k])).collect();
        let t = topology_distribution(&labelled).unwrap();
        for row in &t.rows {
            prop_assert!((row.percent.iter().sum::<f64>() - 100.0).abs() <= 0.1);
        }
        prop_assert!((t.average.iter().sum::<f64>() - 100.0).abs() <= 0.1);
        prop_assert_eq!(t.rows.iter().map(|r| r.runs).sum::<usize>(), runs.len());
    }
}

#[test]
fn report_totals_match_ledger() {
    let pricing = PricingTable::from_toml_str(PRICING).unwrap();
    let mut l = ledger(&[(0, 1_000_000, 0, 2), (1, 0, 1_000_000, 3)]);
    l.record_usage(BackendId::new("openai", "gpt-4o-mini"), 2_000, 500, Phase::Decompose);
    let r = RunReport::new("task-1", &l, &pricing, Duration::from_millis(1500), TopologyKind::Hybrid, 2).unwrap();
    assert_eq!(r.total_tokens, 2_002_500);
    assert_eq!(r.total_cost, Money::from_micros(150_000 + 4_000_000 + 300 + 300));
    assert_eq!(r.tokens_by_phase[&Phase::Decompose], (2_000, 500));
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"total_cost\":\"4.150600\""), "{json}");
    assert!(json.contains("\"wall_clock_us\":1500000"));
    let back: RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}
