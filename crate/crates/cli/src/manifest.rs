//! Run manifest for `exec`.
//!
//! ```toml
//! task_id = "diamond-demo"
//! task = "Write a short report"
//! dag = "diamond.json"
//! router = "router.toml"
//! pricing = "pricing.toml"
//! backend = "scripted:diamond_script.json"   # or "mock", or a provider name
//! concurrency = 8
//! seed = 42
//! output_dir = "out"
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toporoute::exec::{Provider, DEFAULT_CONTEXT_BUDGET};

use crate::error::{fail, Class, ClassExt, CliResult};
use crate::output::read_text;

#[derive(Debug, Clone, PartialEq)]
pub enum BackendMode {
    Mock,
    Scripted(PathBuf),
    Provider(Provider),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockOptions {
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
    /// Extra per-agent latency drawn from `[0, jitter_ms]` with the run seed.
    #[serde(default)]
    pub jitter_ms: u64,
    /// Subtask ids whose calls fail.
    #[serde(default)]
    pub fail_on: Vec<String>,
}

fn default_latency() -> u64 {
    100
}

impl Default for MockOptions {
    fn default() -> Self {
        Self { latency_ms: default_latency(), jitter_ms: 0, fail_on: Vec::new() }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    task_id: Option<String>,
    #[serde(default)]
    task: String,
    domain: Option<String>,
    dag: PathBuf,
    router: Option<PathBuf>,
    pricing: PathBuf,
    templates: Option<PathBuf>,
    backend: String,
    model: Option<String>,
    #[serde(default = "default_pool")]
    pool_size: usize,
    #[serde(default = "default_concurrency")]
    concurrency: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_theta_cs")]
    theta_cs: f64,
    #[serde(default = "default_budget")]
    context_budget: u64,
    #[serde(default = "default_out")]
    output_dir: PathBuf,
    mock: Option<MockOptions>,
}

fn default_pool() -> usize {
    3
}
fn default_concurrency() -> usize {
    8
}
fn default_theta_cs() -> f64 {
    0.8
}
fn default_budget() -> u64 {
    DEFAULT_CONTEXT_BUDGET
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub task_id: String,
    pub task: String,
    pub domain: Option<String>,
    pub dag: PathBuf,
    pub router: Option<PathBuf>,
    pub pricing: PathBuf,
    pub templates: Option<PathBuf>,
    pub backend: BackendMode,
    pub model: Option<String>,
    pub pool_size: usize,
    pub concurrency: usize,
    pub seed: u64,
    pub theta_cs: f64,
    pub context_budget: u64,
    pub output_dir: PathBuf,
    pub mock: MockOptions,
}

fn existing(base: &Path, p: &Path, what: &str) -> CliResult<PathBuf> {
    let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    if !full.exists() {
        return fail(Class::Input, format!("manifest {what} {} does not exist", full.display()));
    }
    Ok(full)
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw: Raw =
            toml::from_str(&read_text(path)?).class_ctx(Class::Input, format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));

        let backend = match raw.backend.split_once(':') {
            _ if raw.backend == "mock" => BackendMode::Mock,
            Some(("scripted", fixture)) => BackendMode::Scripted(existing(base, Path::new(fixture), "fixture")?),
            None => match Provider::parse(&raw.backend) {
                Some(p) => BackendMode::Provider(p),
                None => return fail(Class::Input, format!("unknown backend `{}`", raw.backend)),
            },
            Some(_) => return fail(Class::Input, format!("unknown backend `{}`", raw.backend)),
        };
        if raw.mock.is_some() && backend != BackendMode::Mock {
            return fail(Class::Input, "[mock] options given for a non-mock backend");
        }
        if raw.model.is_some() && !matches!(backend, BackendMode::Provider(_)) {
            return fail(Class::Input, "`model` applies to provider backends only");
        }
        if raw.pool_size == 0 || raw.concurrency == 0 {
            return fail(Class::Input, "pool_size and concurrency must be positive");
        }

        let task_id = raw.task_id.unwrap_or_else(|| {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "task".into())
        });
        Ok(Self {
            task_id,
            task: raw.task,
            domain: raw.domain,
            dag: existing(base, &raw.dag, "dag")?,
            router: raw.router.map(|p| existing(base, &p, "router config")).transpose()?,
            pricing: existing(base, &raw.pricing, "pricing")?,
            templates: raw.templates.map(|p| existing(base, &p, "templates")).transpose()?,
            backend,
            model: raw.model,
            pool_size: raw.pool_size,
            concurrency: raw.concurrency,
            seed: raw.seed,
            theta_cs: raw.theta_cs,
            context_budget: raw.context_budget,
            output_dir: base.join(raw.output_dir),
            mock: raw.mock.unwrap_or_default(),
        })
    }
}
