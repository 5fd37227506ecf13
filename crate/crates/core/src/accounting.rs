//! Token, cost and topology-distribution accounting.
//!
//! Token counts are recorded exactly as the provider reported them, with
//! no cross-provider normalization. Rates are integer micro-units of
//! currency per million tokens, and costs accumulate exactly in units of
//! 1e-12 so that summing ledgers never drifts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{AgentOutput, BackendId};
use crate::router::TopologyKind;

const PER_MILLION: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("no pricing row for backend {0}")]
    MissingPricing(String),
    #[error("pricing config: {0}")]
    Config(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid input: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Decompose,
    Route,
    Execute,
    Synthesize,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Decompose, Phase::Route, Phase::Execute, Phase::Synthesize];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Decompose => "decompose",
            Phase::Route => "route",
            Phase::Execute => "execute",
            Phase::Synthesize => "synthesize",
        }
    }
}

/// Exact amount of currency in units of 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(u128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_micros(micros: u64) -> Self {
        Money(u128::from(micros) * PER_MILLION)
    }

    /// Rounded half up to whole micro-units.
    pub fn micros(self) -> u64 {
        ((self.0 + PER_MILLION / 2) / PER_MILLION) as u64
    }

    /// Whether the amount is a whole number of micro-units.
    pub fn is_whole_micros(self) -> bool {
        self.0.is_multiple_of(PER_MILLION)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1e12
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

/// Six decimals, e.g. `0.150000`.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.micros();
        write!(f, "{}.{:06}", m / 1_000_000, m % 1_000_000)
    }
}

impl Serialize for Money {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_micros(&text).map(Money::from_micros).ok_or_else(|| serde::de::Error::custom(format!("bad amount {text}")))
    }
}

/// Parses a non-negative decimal with at most six fractional digits into
/// micro-units, without going through floating point.
pub fn parse_micros(text: &str) -> Option<u64> {
    let text = text.trim();
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty() && frac.is_empty() || frac.len() > 6 {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
    let frac: u64 = format!("{frac:0<6}").parse().ok()?;
    whole.checked_mul(1_000_000)?.checked_add(frac)
}

/// Per-million-token rates in micro-units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub input_micros: u64,
    pub output_micros: u64,
}

impl Rate {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> Money {
        Money(
            u128::from(prompt_tokens) * u128::from(self.input_micros)
                + u128::from(completion_tokens) * u128::from(self.output_micros),
        )
    }
}

/// Model prices with the date they were taken.
///
/// ```toml
/// as_of = "2026-01-15"
/// currency = "USD"
///
/// [models."gpt-4o-mini"]
/// input = "0.15"
/// output = "0.60"
/// ```
///
/// Rates are per million tokens and may be written as strings or numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PricingTable {
    pub as_of: String,
    pub currency: String,
    pub rates: BTreeMap<String, Rate>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAmount {
    Text(String),
    Number(f64),
}

impl RawAmount {
    fn micros(&self) -> Option<u64> {
        match self {
            RawAmount::Text(t) => parse_micros(t),
            RawAmount::Number(x) if *x >= 0.0 && x.is_finite() => Some((x * 1e6).round() as u64),
            RawAmount::Number(_) => None,
        }
    }
}

impl PricingTable {
    pub fn from_toml_str(text: &str) -> Result<Self, AccountingError> {
        #[derive(Deserialize)]
        struct RawRate {
            input: RawAmount,
            output: RawAmount,
        }
        #[derive(Deserialize)]
        struct Raw {
            as_of: String,
            #[serde(default = "usd")]
            currency: String,
            models: BTreeMap<String, RawRate>,
        }
        fn usd() -> String {
            "USD".into()
        }
        let raw: Raw = toml::from_str(text).map_err(|e| AccountingError::Config(e.to_string()))?;
        if raw.as_of.trim().is_empty() {
            return Err(AccountingError::Config("as_of date is empty".into()));
        }
        let mut rates = BTreeMap::new();
        for (model, r) in raw.models {
            let bad = || AccountingError::Config(format!("model {model}: rates must be non-negative decimals"));
            let input_micros = r.input.micros().ok_or_else(bad)?;
            let output_micros = r.output.micros().ok_or_else(bad)?;
            rates.insert(model, Rate { input_micros, output_micros });
        }
        Ok(Self { as_of: raw.as_of, currency: raw.currency, rates })
    }

    pub fn load(path: &Path) -> Result<Self, AccountingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| AccountingError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Looks up `name/model` first, then the bare model label.
    pub fn rate(&self, backend: &BackendId) -> Result<Rate, AccountingError> {
        self.rates
            .get(&backend.to_string())
            .or_else(|| self.rates.get(&backend.model))
            .copied()
            .ok_or_else(|| AccountingError::MissingPricing(backend.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub backend: BackendId,
    pub subtask_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub usage_reported: bool,
    pub phase: Phase,
}

/// Append-only record of every model call in one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, output: &AgentOutput, phase: Phase) {
        self.entries.push(LedgerEntry {
            backend: output.backend.clone(),
            subtask_id: output.subtask_id.clone(),
            prompt_tokens: output.prompt_tokens,
            completion_tokens: output.completion_tokens,
            usage_reported: output.usage_reported,
            phase,
        });
    }

    /// Records usage that did not come through an agent backend, such as
    /// the decomposer call that produced the DAG.
    pub fn record_usage(&mut self, backend: BackendId, prompt_tokens: u64, completion_tokens: u64, phase: Phase) {
        self.entries.push(LedgerEntry {
            backend,
            subtask_id: phase.as_str().to_owned(),
            prompt_tokens,
            completion_tokens,
            usage_reported: true,
            phase,
        });
    }

    pub fn extend(&mut self, other: CostLedger) {
        self.entries.extend(other.entries);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.completion_tokens).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens() + self.completion_tokens()
    }

    /// (prompt, completion) totals per phase.
    pub fn by_phase(&self) -> BTreeMap<Phase, (u64, u64)> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            let slot = out.entry(e.phase).or_insert((0, 0));
            slot.0 += e.prompt_tokens;
            slot.1 += e.completion_tokens;
        }
        out
    }

    /// True when any entry's counts were approximated.
    pub fn has_approximate_usage(&self) -> bool {
        self.entries.iter().any(|e| !e.usage_reported)
    }
}

/// Total cost of a ledger. Fails on the first backend without a price.
pub fn cost_of(ledger: &CostLedger, pricing: &PricingTable) -> Result<Money, AccountingError> {
    ledger
        .entries
        .iter()
        .map(|e| Ok(pricing.rate(&e.backend)?.cost(e.prompt_tokens, e.completion_tokens)))
        .sum()
}

/// Summary of one task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task_id: String,
    pub topology: TopologyKind,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub total_cost: Money,
    pub currency: String,
    pub pricing_as_of: String,
    #[serde(with = "crate::router::duration_micros", rename = "wall_clock_us")]
    pub wall_clock: Duration,
    pub iterations: usize,
    pub tokens_by_phase: BTreeMap<Phase, (u64, u64)>,
    pub approximate_usage: bool,
}

impl RunReport {
    pub fn new(
        task_id: impl Into<String>,
        ledger: &CostLedger,
        pricing: &PricingTable,
        wall_clock: Duration,
        topology: TopologyKind,
        iterations: usize,
    ) -> Result<Self, AccountingError> {
        Ok(Self {
            task_id: task_id.into(),
            topology,
            prompt_tokens: ledger.prompt_tokens(),
            completion_tokens: ledger.completion_tokens(),
            total_tokens: ledger.total_tokens(),
            total_cost: cost_of(ledger, pricing)?,
            currency: pricing.currency.clone(),
            pricing_as_of: pricing.as_of.clone(),
            wall_clock,
            iterations,
            tokens_by_phase: ledger.by_phase(),
            approximate_usage: ledger.has_approximate_usage(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub domain: String,
    pub runs: usize,
    /// Percentages in `TopologyKind::ALL` order.
    pub percent: [f64; 4],
}

/// Percentage of runs per topology for each domain, plus the unweighted
/// mean over domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub rows: Vec<DistributionRow>,
    pub average: [f64; 4],
}

/// Groups runs by domain label; domains appear in first-seen order.
pub fn topology_distribution<D: AsRef<str>>(runs: &[(D, TopologyKind)]) -> Result<DistributionTable, AccountingError> {
    if runs.is_empty() {
        return Err(AccountingError::Parameter("no runs to tabulate".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut counts: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    for (domain, kind) in runs {
        let d = domain.as_ref();
        if !counts.contains_key(d) {
            order.push(d.to_owned());
        }
        counts.entry(d.to_owned()).or_default()[kind.index()] += 1;
    }
    let rows: Vec<DistributionRow> = order
        .into_iter()
        .map(|domain| {
            let c = counts[&domain];
            let runs: usize = c.iter().sum();
            let percent = c.map(|x| 100.0 * x as f64 / runs as f64);
            DistributionRow { domain, runs, percent }
        })
        .collect();
    let average = std::array::from_fn(|j| rows.iter().map(|r| r.percent[j]).sum::<f64>() / rows.len() as f64);
    Ok(DistributionTable { rows, average })
}

/// Groups `reports` by the parallel `domains` slice.
pub fn distribution_of_reports(reports: &[RunReport], domains: &[String]) -> Result<DistributionTable, AccountingError> {
    if reports.len() != domains.len() {
        return Err(AccountingError::Parameter(format!("{} reports but {} domain labels", reports.len(), domains.len())));
    }
    let runs: Vec<(&str, TopologyKind)> = domains.iter().map(String::as_str).zip(reports.iter().map(|r| r.topology)).collect();
    topology_distribution(&runs)
}

fn pct(x: f64) -> String {
    let r = (x * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

impl DistributionTable {
    /// Text table in the layout Domain | P | S | H | X, then an Average row.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.domain.len()).max().unwrap_or(0).max("Average".len());
        let mut out = format!("{:<width$}", "Domain");
        for k in TopologyKind::ALL {
            out.push_str(&format!("  {:>16}", format!("τ_{} ({k})", k.short())));
        }
        out.push('\n');
        let mut line = |label: &str, p: &[f64; 4]| {
            out.push_str(&format!("{label:<width$}"));
            for x in p {
                out.push_str(&format!("  {:>16}", pct(*x)));
            }
            out.push('\n');
        };
        for r in &self.rows {
            line(&r.domain, &r.percent);
        }
        line("Average", &self.average);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("domain,runs,parallel,sequential,hierarchical,hybrid\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.1},{:.1},{:.1},{:.1}\n",
                r.domain, r.runs, r.percent[0], r.percent[1], r.percent[2], r.percent[3]
            ));
        }
        let total: usize = self.rows.iter().map(|r| r.runs).sum();
        let a = self.average;
        out.push_str(&format!("Average,{total},{:.1},{:.1},{:.1},{:.1}\n", a[0], a[1], a[2], a[3]));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRICING: &str = r#"
as_of = "2026-01-15"
[models."gpt-4o-mini"]
input = "0.15"
output = "0.60"
[models."claude-3.5-haiku"]
input = 0.80
output = 4.00
"#;

    fn out(model: &str, p: u64, c: u64) -> AgentOutput {
        AgentOutput {
            subtask_id: "v".into(),
            text: String::new(),
            prompt_tokens: p,
            completion_tokens: c,
            usage_reported: true,
            latency: Duration::ZERO,
            backend: BackendId::new("openai", model),
        }
    }

    #[test]
    fn record_passes_counts_through() {
        let mut l = CostLedger::new();
        l.record(&out("gpt-4o-mini", 1200, 300), Phase::Execute);
        l.record(&out("gpt-4o-mini", 0, 0), Phase::Synthesize);
        assert_eq!(l.entries().len(), 2);
        assert_eq!((l.entries()[0].prompt_tokens, l.entries()[0].completion_tokens), (1200, 300));
        assert_eq!(l.entries()[1].prompt_tokens, 0);
        assert_eq!(l.total_tokens(), 1500);
        assert_eq!(l.by_phase()[&Phase::Execute], (1200, 300));
    }

    #[test]
    fn published_prices() {
        let p = PricingTable::from_toml_str(PRICING).unwrap();
        assert_eq!(p.as_of, "2026-01-15");
        let mut l = CostLedger::new();
        l.record(&out("gpt-4o-mini", 1_000_000, 0), Phase::Execute);
        assert_eq!(cost_of(&l, &p).unwrap(), Money::from_micros(150_000));
        let mut h = CostLedger::new();
        h.record(&out("claude-3.5-haiku", 0, 1_000_000), Phase::Execute);
        assert_eq!(cost_of(&h, &p).unwrap().micros(), 4_000_000);
        assert_eq!(cost_of(&h, &p).unwrap().to_string(), "4.000000");
        assert_eq!(cost_of(&CostLedger::new(), &p).unwrap(), Money::ZERO);
    }

    #[test]
    fn missing_price_names_backend() {
        let p = PricingTable::from_toml_str(PRICING).unwrap();
        let mut l = CostLedger::new();
        l.record(&out("mystery-1", 1, 1), Phase::Execute);
        let err = cost_of(&l, &p).unwrap_err();
        assert!(err.to_string().contains("openai/mystery-1"), "{err}");
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(parse_micros("0.15"), Some(150_000));
        assert_eq!(parse_micros("4"), Some(4_000_000));
        assert_eq!(parse_micros(".5"), Some(500_000));
        assert_eq!(parse_micros("1.0000001"), None);
        assert_eq!(parse_micros("-1"), None);
        assert_eq!(parse_micros(""), None);
        assert!(PricingTable::from_toml_str("as_of = \"\"\n[models]\n").is_err());
        assert!(PricingTable::from_toml_str("as_of = \"x\"\n[models.m]\ninput = -1\noutput = 1\n").is_err());
    }

    #[test]
    fn distribution_rows() {
        let runs: Vec<(&str, TopologyKind)> = std::iter::repeat_n(("swe", TopologyKind::Hybrid), 62)
            .chain(std::iter::repeat_n(("swe", TopologyKind::Parallel), 24))
            .chain(std::iter::repeat_n(("swe", TopologyKind::Hierarchical), 14))
            .collect();
        let t = topology_distribution(&runs).unwrap();
        assert_eq!(t.rows[0].percent, [24.0, 0.0, 14.0, 62.0]);
        assert_eq!(t.average, t.rows[0].percent);
        assert!(topology_distribution::<&str>(&[]).is_err());
    }

    #[test]
    fn two_domains_and_average() {
        let runs = [("a", TopologyKind::Hybrid), ("b", TopologyKind::Sequential), ("b", TopologyKind::Hybrid)];
        let t = topology_distribution(&runs).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.average, [0.0, 25.0, 0.0, 75.0]);
        let text = t.to_table();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().starts_with("Average"));
        assert!(t.to_csv().ends_with("Average,3,0.0,25.0,0.0,75.0\n"));
    }
}
