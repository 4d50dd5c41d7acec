//! Run configurations and batch planning.
//!
//! A batch of [`RunConfig`]s comes from command-line flags or a JSON document
//! and is sized up front by [`plan_arena`], so the engine can allocate its
//! buffers once for the whole batch.

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use clap::{Args, Parser};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patterns::{parse_pattern, IndexPattern, PatternError, PatternKind};

pub const DEFAULT_RUNS: u32 = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid pattern: {0}")]
    Pattern(#[from] PatternError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid configuration at entry {index}: {reason}")]
    InvalidEntry { index: usize, reason: String },
    #[error("JSON syntax error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("required elements overflow 64-bit arithmetic (extent {extent}, delta {delta}, count {count})")]
    Overflow { extent: u64, delta: u64, count: u64 },
    #[error("cannot plan an empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gather,
    Scatter,
}

impl Kernel {
    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Gather => "gather",
            Kernel::Scatter => "scatter",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kernel {
    type Err = String;

    /// Case-insensitive: `Gather`, `gather` and `GATHER` are all accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gather" => Ok(Kernel::Gather),
            "scatter" => Ok(Kernel::Scatter),
            _ => Err(format!("unknown kernel `{s}` (expected gather or scatter)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Serial,
    Parallel { threads: usize },
}

impl Backend {
    pub fn threads(self) -> usize {
        match self {
            Backend::Serial => 1,
            Backend::Parallel { threads } => threads,
        }
    }
}

/// Hardware thread count, falling back to 1.
pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(NonZeroUsize::get)
        .unwrap_or(1)
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub name: Option<String>,
    pub kernel: Kernel,
    pub pattern: IndexPattern,
    /// Base-address step between iterations, in elements. Iteration `i`
    /// starts at `i * delta`.
    pub delta: u64,
    /// Number of gathers or scatters.
    pub count: u64,
    pub runs: u32,
    pub backend: Backend,
}

impl RunConfig {
    pub fn new(kernel: Kernel, pattern: IndexPattern, delta: u64, count: u64) -> Self {
        Self {
            name: None,
            kernel,
            pattern,
            delta,
            count,
            runs: DEFAULT_RUNS,
            backend: Backend::Parallel {
                threads: default_threads(),
            },
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_runs(mut self, runs: u32) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    /// Name used in reports: the explicit name, else the pattern label,
    /// else `<kernel>:<pattern>`.
    pub fn display_name(&self) -> String {
        match (&self.name, self.pattern.label()) {
            (Some(n), _) => n.clone(),
            (None, Some(l)) => l.to_string(),
            (None, None) => format!("{}:{}", self.kernel, self.pattern.render()),
        }
    }

    /// Bytes of useful data moved by one timed run (index traffic excluded).
    pub fn moved_bytes(&self) -> u64 {
        8 * self.pattern.len() as u64 * self.count
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.count == 0 {
            return Err(ConfigError::Invalid("count must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(ConfigError::Invalid("runs must be at least 1".into()));
        }
        if self.backend.threads() == 0 {
            return Err(ConfigError::Invalid("threads must be at least 1".into()));
        }
        (self.pattern.len() as u64)
            .checked_mul(8)
            .and_then(|b| b.checked_mul(self.count))
            .ok_or_else(|| ConfigError::Invalid("moved bytes overflow 64 bits".into()))?;
        required_elements(self)?;
        Ok(())
    }
}

/// Last touched element + 1: `extent + delta * (count - 1)`.
pub fn required_elements(config: &RunConfig) -> Result<u64, ConfigError> {
    let extent = config.pattern.extent();
    let overflow = || ConfigError::Overflow {
        extent,
        delta: config.delta,
        count: config.count,
    };
    if config.count == 0 {
        return Err(ConfigError::Invalid("count must be at least 1".into()));
    }
    config
        .delta
        .checked_mul(config.count - 1)
        .and_then(|span| span.checked_add(extent))
        .ok_or_else(overflow)
}

/// Memory needed by a whole batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArenaPlan {
    /// Shared gather source / scatter destination, in elements.
    pub large_elements: u64,
    /// Per-thread gather destination / scatter source, in elements.
    pub small_elements: u64,
    pub max_threads: usize,
}

pub fn plan_arena(batch: &[RunConfig]) -> Result<ArenaPlan, ConfigError> {
    if batch.is_empty() {
        return Err(ConfigError::EmptyBatch);
    }
    let mut plan = ArenaPlan {
        large_elements: 0,
        small_elements: 0,
        max_threads: 1,
    };
    for (index, config) in batch.iter().enumerate() {
        config.check().map_err(|e| ConfigError::InvalidEntry {
            index,
            reason: e.to_string(),
        })?;
        plan.large_elements = plan.large_elements.max(required_elements(config)?);
        plan.small_elements = plan.small_elements.max(config.pattern.len() as u64);
        plan.max_threads = plan.max_threads.max(config.backend.threads());
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendArg {
    Serial,
    Parallel,
}

fn resolve_backend(backend: Option<BackendArg>, threads: Option<usize>) -> Result<Backend, String> {
    match (backend, threads) {
        (Some(BackendArg::Serial), Some(t)) if t != 1 => {
            Err(format!("threads = {t} conflicts with the serial backend"))
        }
        (Some(BackendArg::Serial), _) => Ok(Backend::Serial),
        (_, Some(0)) => Err("threads must be at least 1".into()),
        (_, Some(t)) => Ok(Backend::Parallel { threads: t }),
        (_, None) => Ok(Backend::Parallel {
            threads: default_threads(),
        }),
    }
}

/// Flags describing a single configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Kernel: gather or scatter (case-insensitive)
    #[arg(short = 'k', long = "kernel")]
    pub kernel: Option<Kernel>,
    /// Index pattern, e.g. UNIFORM:8:1 or 0,24,48
    #[arg(short = 'p', long = "pattern", allow_hyphen_values = true)]
    pub pattern: Option<String>,
    /// Base-address step between iterations, in elements
    #[arg(short = 'd', long = "delta")]
    pub delta: Option<u64>,
    /// Number of gathers/scatters per run
    #[arg(short = 'l', long = "count")]
    pub count: Option<u64>,
    /// Timed runs per configuration
    #[arg(short = 'r', long = "runs")]
    pub runs: Option<u32>,
    #[arg(short = 'b', long = "backend", value_enum)]
    pub backend: Option<BackendArg>,
    /// Worker threads for the parallel backend (default: all hardware threads)
    #[arg(short = 't', long = "threads")]
    pub threads: Option<usize>,
}

impl ConfigArgs {
    /// True if any per-config flag was supplied.
    pub fn any_set(&self) -> bool {
        self.kernel.is_some()
            || self.pattern.is_some()
            || self.delta.is_some()
            || self.count.is_some()
    }

    pub fn into_config(self) -> Result<RunConfig, ConfigError> {
        let missing = |flag: &str| ConfigError::Usage(format!("missing required flag {flag}"));
        let kernel = self.kernel.ok_or_else(|| missing("-k/--kernel"))?;
        let pattern = self.pattern.ok_or_else(|| missing("-p/--pattern"))?;
        let delta = self.delta.ok_or_else(|| missing("-d/--delta"))?;
        let count = self.count.ok_or_else(|| missing("-l/--count"))?;
        let backend = resolve_backend(self.backend, self.threads)
            .map_err(|e| ConfigError::Usage(format!("-t/--threads: {e}")))?;
        let config = RunConfig {
            name: None,
            kernel,
            pattern: parse_pattern(&pattern)?,
            delta,
            count,
            runs: self.runs.unwrap_or(DEFAULT_RUNS),
            backend,
        };
        config.check()?;
        Ok(config)
    }
}

#[derive(Debug, Parser)]
#[command(no_binary_name = true, disable_help_flag = true)]
struct ConfigOnly {
    #[command(flatten)]
    args: ConfigArgs,
}

/// Builds a one-config batch from per-config flags (`-k -p -d -l [-r -b -t]`).
pub fn parse_cli<I, S>(args: I) -> Result<Vec<RunConfig>, ConfigError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let parsed = ConfigOnly::try_parse_from(args)
        .map_err(|e| ConfigError::Usage(e.to_string().trim().to_string()))?;
    Ok(vec![parsed.args.into_config()?])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonPattern {
    Grammar(String),
    List(Vec<u64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    kernel: String,
    pattern: JsonPattern,
    delta: u64,
    count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    runs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

impl JsonEntry {
    fn into_config(self) -> Result<RunConfig, String> {
        let kernel: Kernel = self.kernel.parse()?;
        let pattern = match self.pattern {
            JsonPattern::Grammar(s) => parse_pattern(&s).map_err(|e| e.to_string())?,
            JsonPattern::List(v) => IndexPattern::custom(v).map_err(|e| e.to_string())?,
        };
        let backend = match self.backend.as_deref() {
            None => None,
            Some("serial") => Some(BackendArg::Serial),
            Some("parallel") => Some(BackendArg::Parallel),
            Some(other) => {
                return Err(format!(
                    "unknown backend `{other}` (expected serial or parallel)"
                ))
            }
        };
        let config = RunConfig {
            name: self.name,
            kernel,
            pattern,
            delta: self.delta,
            count: self.count,
            runs: self.runs.unwrap_or(DEFAULT_RUNS),
            backend: resolve_backend(backend, self.threads)?,
        };
        config.check().map_err(|e| e.to_string())?;
        Ok(config)
    }

    fn from_config(config: &RunConfig) -> Self {
        let pattern = match config.pattern.kind() {
            PatternKind::Custom => JsonPattern::List(config.pattern.indices().to_vec()),
            _ => JsonPattern::Grammar(config.pattern.render()),
        };
        let (backend, threads) = match config.backend {
            Backend::Serial => ("serial", None),
            Backend::Parallel { threads } => ("parallel", Some(threads)),
        };
        Self {
            name: config.name.clone(),
            kernel: config.kernel.as_str().to_string(),
            pattern,
            delta: config.delta,
            count: config.count,
            runs: Some(config.runs),
            backend: Some(backend.to_string()),
            threads,
        }
    }
}

/// Parses a JSON array of configuration objects.
pub fn parse_json(doc: &str) -> Result<Vec<RunConfig>, ConfigError> {
    let entries: Vec<serde_json::Value> = serde_json::from_str(doc)?;
    entries
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            serde_json::from_value::<JsonEntry>(value)
                .map_err(|e| e.to_string())
                .and_then(JsonEntry::into_config)
                .map_err(|reason| ConfigError::InvalidEntry { index, reason })
        })
        .collect()
}

/// Serializes a batch in the format accepted by [`parse_json`].
pub fn emit_json(batch: &[RunConfig]) -> String {
    let entries: Vec<JsonEntry> = batch.iter().map(JsonEntry::from_config).collect();
    serde_json::to_string_pretty(&entries).expect("config entries always serialize")
}
