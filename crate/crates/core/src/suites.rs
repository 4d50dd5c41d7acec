//! Built-in benchmark suites.
//!
//! * `ustride-gather` / `ustride-scatter`: uniform strides 1..=128, doubling,
//!   with `delta = len * stride` so consecutive iterations never share data.
//! * `stream`: a single STREAM-copy-like gather.
//! * `apps`, `apps-gather`, `apps-scatter`: index buffers and deltas taken
//!   from gather/scatter traces of PENNANT, LULESH, Nekbone and AMG.
//!
//! Every suite starts each kernel group with a stride-1 baseline config used
//! to normalise the others.

use thiserror::Error;

use crate::patterns::{gen_uniform, IndexPattern};
use crate::planner::{default_threads, Backend, Kernel, RunConfig, DEFAULT_RUNS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}` (known: {known})", known = SUITE_NAMES.join(", "))]
    Unknown(String),
    #[error("index buffer length must be at least 1")]
    ZeroLength,
}

pub const SUITE_NAMES: [&str; 6] = [
    "ustride-gather",
    "ustride-scatter",
    "stream",
    "apps",
    "apps-gather",
    "apps-scatter",
];

pub const DEFAULT_TARGET_BYTES: u64 = 1 << 28;
pub const DEFAULT_MAX_ARENA_BYTES: u64 = 1 << 31;
pub const DEFAULT_LEN: u64 = 16;
pub const USTRIDE_STRIDES: [u64; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteParams {
    /// Data each config should move per timed run.
    pub target_bytes: u64,
    /// Counts are lowered so no config's footprint exceeds this.
    pub max_arena_bytes: u64,
    pub runs: u32,
    pub backend: Backend,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            target_bytes: DEFAULT_TARGET_BYTES,
            max_arena_bytes: DEFAULT_MAX_ARENA_BYTES,
            runs: DEFAULT_RUNS,
            backend: Backend::Parallel {
                threads: default_threads(),
            },
        }
    }
}

impl SuiteParams {
    /// Iterations moving at least `target_bytes`, reduced so the footprint
    /// `extent + delta * (count - 1)` stays within `max_arena_bytes`. Never 0.
    pub fn count_for(&self, pattern: &IndexPattern, delta: u64) -> u64 {
        let per_iter = 8 * pattern.len() as u64;
        let wanted = self.target_bytes.div_ceil(per_iter).max(1);
        let max_elements = self.max_arena_bytes / 8;
        let extent = pattern.extent();
        let fit = if delta == 0 {
            u64::MAX
        } else if extent > max_elements {
            1
        } else {
            (max_elements - extent) / delta + 1
        };
        wanted.min(fit).max(1)
    }

    fn config(&self, name: &str, kernel: Kernel, pattern: IndexPattern, delta: u64) -> RunConfig {
        let count = self.count_for(&pattern, delta);
        RunConfig::new(kernel, pattern, delta, count)
            .with_name(name)
            .with_runs(self.runs)
            .with_backend(self.backend)
    }

    fn baseline(&self, kernel: Kernel, len: u64) -> RunConfig {
        let name = match kernel {
            Kernel::Gather => "BASELINE-G",
            Kernel::Scatter => "BASELINE-S",
        };
        let pattern = gen_uniform(len, 1).expect("len >= 1");
        self.config(name, kernel, pattern, len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suite {
    pub name: String,
    pub configs: Vec<RunConfig>,
    /// Position of the stride-1 config used for normalisation.
    pub baseline_index: usize,
}

/// Uniform-stride sweep. Stride 1 is the baseline.
pub fn suite_ustride(kernel: Kernel, len: u64, params: &SuiteParams) -> Result<Suite, SuiteError> {
    if len == 0 {
        return Err(SuiteError::ZeroLength);
    }
    let configs = USTRIDE_STRIDES
        .iter()
        .map(|&stride| {
            let pattern = gen_uniform(len, stride).expect("small strides cannot overflow");
            params.config(&format!("STRIDE-{stride}"), kernel, pattern, len * stride)
        })
        .collect();
    Ok(Suite {
        name: format!("ustride-{kernel}"),
        configs,
        baseline_index: 0,
    })
}

/// `UNIFORM:8:1`, delta 8, 2^24 gathers: STREAM-copy-like read bandwidth.
pub fn suite_stream_like() -> Suite {
    let pattern = gen_uniform(8, 1).expect("valid");
    let config = RunConfig::new(Kernel::Gather, pattern, 8, 1 << 24)
        .with_name("STREAM-LIKE")
        .with_runs(DEFAULT_RUNS);
    Suite {
        name: "stream".into(),
        configs: vec![config],
        baseline_index: 0,
    }
}

/// One row of the application pattern table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppPattern {
    pub name: &'static str,
    pub kernel: Kernel,
    pub indices: &'static [u64],
    pub delta: u64,
    /// Classification from the source table; empty when unclassified.
    pub class: &'static str,
}

impl AppPattern {
    pub fn pattern(&self) -> IndexPattern {
        IndexPattern::custom(self.indices.to_vec())
            .expect("table rows are non-empty")
            .with_label(self.name)
    }

    /// `NAME & [i0,i1,...] & DELTA & CLASS`, the layout of the source table.
    pub fn render_row(&self) -> String {
        format!(
            "{} & [{}] & {} & {}",
            self.name,
            self.pattern().render_list(),
            self.delta,
            self.class
        )
    }
}

const PENNANT_A: &[u64] = &[2, 484, 482, 0, 4, 486, 484, 2, 6, 488, 486, 4, 8, 490, 488, 6];
const PENNANT_B: &[u64] = &[0, 2, 484, 482, 2, 4, 486, 484, 4, 6, 488, 486, 6, 8, 490, 488];
const STRIDE4: &[u64] = &[0, 4, 8, 12, 16, 20, 24, 28, 32, 36, 40, 44, 48, 52, 56, 60];
const PENNANT_C: &[u64] = &[4, 8, 12, 0, 20, 24, 28, 16, 36, 40, 44, 32, 52, 56, 60, 48];
const BROADCAST4: &[u64] = &[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3];
const PENNANT_D: &[u64] = &[482, 0, 2, 484, 484, 2, 4, 486, 486, 4, 6, 488, 488, 6, 8, 490];
const PENNANT_E: &[u64] = &[2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0];
const PENNANT_F: &[u64] = &[6, 0, 2, 4, 14, 8, 10, 12, 22, 16, 18, 20, 30, 24, 26, 28];
const STRIDE1: &[u64] = &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];
const STRIDE8: &[u64] = &[0, 8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120];
const STRIDE24: &[u64] = &[
    0, 24, 48, 72, 96, 120, 144, 168, 192, 216, 240, 264, 288, 312, 336, 360,
];
const STRIDE6: &[u64] = &[0, 6, 12, 18, 24, 30, 36, 42, 48, 54, 60, 66, 72, 78, 84, 90];
const AMG_A: &[u64] = &[
    1333, 0, 1, 36, 37, 72, 73, 1296, 1297, 1332, 1368, 1369, 2592, 2593, 2628, 2629,
];
const AMG_B: &[u64] = &[
    1333, 0, 1, 2, 36, 37, 38, 72, 73, 74, 1296, 1297, 1298, 1332, 1334, 1368,
];

const fn row(
    name: &'static str,
    kernel: Kernel,
    indices: &'static [u64],
    delta: u64,
    class: &'static str,
) -> AppPattern {
    AppPattern {
        name,
        kernel,
        indices,
        delta,
        class,
    }
}

use Kernel::{Gather as G, Scatter as S};

/// Gather and scatter patterns from the mini-app traces, in table order.
pub const APP_PATTERNS: [AppPattern; 34] = [
    row("PENNANT-G0", G, PENNANT_A, 2, ""),
    row("PENNANT-G1", G, PENNANT_B, 2, ""),
    row("PENNANT-G2", G, STRIDE4, 2, "Stride-4"),
    row("PENNANT-G3", G, PENNANT_C, 2, ""),
    row("PENNANT-G4", G, BROADCAST4, 4, "Broadcast"),
    row("PENNANT-G5", G, PENNANT_C, 4, ""),
    row("PENNANT-G6", G, PENNANT_D, 480, ""),
    row("PENNANT-G7", G, PENNANT_D, 482, ""),
    row("PENNANT-G8", G, PENNANT_E, 129608, ""),
    row("PENNANT-G9", G, BROADCAST4, 388852, "Broadcast"),
    row("PENNANT-G10", G, BROADCAST4, 388848, "Broadcast"),
    row("PENNANT-G11", G, BROADCAST4, 388848, "Broadcast"),
    row("PENNANT-G12", G, PENNANT_F, 518408, ""),
    row("PENNANT-G13", G, PENNANT_F, 518408, ""),
    row("PENNANT-G14", G, PENNANT_F, 1036816, ""),
    row("PENNANT-G15", G, BROADCAST4, 1882384, "Broadcast"),
    row("LULESH-G0", G, STRIDE1, 1, "Stride-1"),
    row("LULESH-G1", G, STRIDE1, 8, "Stride-1"),
    row("LULESH-G2", G, STRIDE8, 1, "Stride-8"),
    row("LULESH-G3", G, STRIDE24, 8, "Stride-24"),
    row("LULESH-G4", G, STRIDE24, 4, "Stride-24"),
    row("LULESH-G5", G, STRIDE24, 1, "Stride-24"),
    row("LULESH-G6", G, STRIDE24, 8, "Stride-24"),
    row("LULESH-G7", G, STRIDE1, 41, "Stride-1"),
    row("NEKBONE-G0", G, STRIDE6, 3, "Stride-6"),
    row("NEKBONE-G1", G, STRIDE6, 8, "Stride-6"),
    row("NEKBONE-G2", G, STRIDE6, 8, "Stride-6"),
    row("AMG-G0", G, AMG_A, 1, "Mostly Stride-1"),
    row("AMG-G1", G, AMG_B, 1, "Mostly Stride-1"),
    row("PENNANT-S0", S, STRIDE4, 1, "Stride-4"),
    row("LULESH-S0", S, STRIDE8, 1, "Stride-8"),
    row("LULESH-S1", S, STRIDE24, 8, "Stride-24"),
    row("LULESH-S2", S, STRIDE24, 1, "Stride-24"),
    row("LULESH-S3", S, STRIDE24, 0, "Stride-24"),
];

pub fn app_pattern(name: &str) -> Option<&'static AppPattern> {
    APP_PATTERNS.iter().find(|p| p.name == name)
}

/// Application patterns, optionally restricted to one kernel. Each kernel
/// group is preceded by its `UNIFORM:16:1` baseline; `baseline_index` is the
/// first group's baseline.
pub fn suite_apps(kernel_filter: Option<Kernel>, params: &SuiteParams) -> Suite {
    let mut configs = Vec::with_capacity(APP_PATTERNS.len() + 2);
    for kernel in [Kernel::Gather, Kernel::Scatter] {
        if kernel_filter.is_some_and(|k| k != kernel) {
            continue;
        }
        configs.push(params.baseline(kernel, DEFAULT_LEN));
        configs.extend(
            APP_PATTERNS
                .iter()
                .filter(|p| p.kernel == kernel)
                .map(|p| params.config(p.name, kernel, p.pattern(), p.delta)),
        );
    }
    let name = match kernel_filter {
        None => "apps".to_string(),
        Some(k) => format!("apps-{k}"),
    };
    Suite {
        name,
        configs,
        baseline_index: 0,
    }
}

/// Looks a suite up by its registry name.
pub fn by_name(name: &str, params: &SuiteParams) -> Result<Suite, SuiteError> {
    match name {
        "ustride-gather" => suite_ustride(Kernel::Gather, DEFAULT_LEN, params),
        "ustride-scatter" => suite_ustride(Kernel::Scatter, DEFAULT_LEN, params),
        "stream" => Ok(suite_stream_like()),
        "apps" => Ok(suite_apps(None, params)),
        "apps-gather" => Ok(suite_apps(Some(Kernel::Gather), params)),
        "apps-scatter" => Ok(suite_apps(Some(Kernel::Scatter), params)),
        other => Err(SuiteError::Unknown(other.to_string())),
    }
}

/// Whether any two consecutive iterations touch a common element.
#[cfg(test)]
fn consecutive_overlap(config: &RunConfig, upto: u64) -> bool {
    use std::collections::HashSet;
    let set = |i: u64| -> HashSet<u64> {
        config
            .pattern
            .indices()
            .iter()
            .map(|&x| i * config.delta + x)
            .collect()
    };
    (0..upto.saturating_sub(1)).any(|i| !set(i).is_disjoint(&set(i + 1)))
}
