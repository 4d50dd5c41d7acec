//! Kernel execution and timing.
//!
//! An [`Engine`] owns the [`BufferArena`] for one batch and a [`Timer`].
//! Each timed run performs all `count` iterations of a config, including the
//! fork/join of worker threads; the arena is allocated once, up front.

mod arena;
mod kernels;
mod timer;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::planner::{plan_arena, required_elements, ArenaPlan, Backend, ConfigError, Kernel, RunConfig};

pub use arena::{AlignedBuffer, BufferArena, ARENA_ALIGN};
pub use kernels::{partition, thread_of};
pub use timer::{FakeTimer, MonotonicTimer, Timer, MIN_RESOLUTION_S};

use kernels::{gather_pass, scatter_pass, GatherSink, Lane, Opaque, ScatterSource};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("failed to allocate {bytes} bytes for the buffer arena")]
    Allocation { bytes: u64 },
    #[error("arena holds {available} elements but the config needs {needed}")]
    ArenaTooSmall { needed: u64, available: u64 },
    #[error("config needs {threads} threads but the arena was planned for {available}")]
    TooManyThreads { threads: usize, available: usize },
    #[error("expected a {expected} config, got {got}")]
    WrongKernel { expected: Kernel, got: Kernel },
    #[error("nondeterministic overlap: parallel scatter `{name}` writes some elements from several iterations; validate it with the serial backend")]
    NondeterministicOverlap { name: String },
    #[error("timer reported a non-positive or non-finite duration ({0} s)")]
    BadDuration(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Outcome of one config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelResult {
    pub name: String,
    pub kernel: Kernel,
    pub pattern: String,
    pub pattern_len: usize,
    pub delta: u64,
    pub count: u64,
    pub runs: u32,
    /// Seconds per timed run, in run order.
    pub run_times: Vec<f64>,
    pub min_time: f64,
    /// `8 * len(pattern) * count`; index-buffer traffic is not counted.
    pub moved_bytes: u64,
    /// `moved_bytes / min_time / 1e6`.
    pub bandwidth_mb_s: f64,
}

impl KernelResult {
    pub fn from_times(config: &RunConfig, run_times: Vec<f64>) -> Result<Self, EngineError> {
        let min_time = run_times.iter().copied().fold(f64::INFINITY, f64::min);
        if run_times.is_empty() || !(min_time > 0.0 && min_time.is_finite()) {
            return Err(EngineError::BadDuration(min_time));
        }
        if let Some(&bad) = run_times.iter().find(|t| !t.is_finite()) {
            return Err(EngineError::BadDuration(bad));
        }
        let moved_bytes = config.moved_bytes();
        Ok(Self {
            name: config.display_name(),
            kernel: config.kernel,
            pattern: config.pattern.render(),
            pattern_len: config.pattern.len(),
            delta: config.delta,
            count: config.count,
            runs: run_times.len() as u32,
            run_times,
            min_time,
            moved_bytes,
            bandwidth_mb_s: moved_bytes as f64 / min_time / 1e6,
        })
    }
}

/// First element that disagreed with the reference interpreter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    /// Iteration and lane, for gathers.
    pub iteration: Option<u64>,
    pub lane: Option<usize>,
    /// Large-buffer element involved.
    pub element: u64,
    pub expected: f64,
    pub actual: f64,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(i), Some(j)) = (self.iteration, self.lane) {
            write!(f, "iteration {i} lane {j} ")?;
        }
        write!(
            f,
            "element {}: expected {}, got {}",
            self.element, self.expected, self.actual
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(Mismatch),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Value stored by lane `j` of iteration `i` during validation passes.
/// Exact in `f64` while `i * len + j + 1 < 2^53`.
pub fn scatter_code(i: u64, j: usize, len: usize) -> f64 {
    (i * len as u64 + j as u64 + 1) as f64
}

/// Value held by lane `j` of thread `t`'s source buffer during timed scatters.
pub fn thread_code(t: usize, j: usize) -> f64 {
    (t as f64) * 65536.0 + j as f64 + 1.0
}

/// Sentinel written to the large buffer before a scatter validation pass.
pub const SCATTER_SENTINEL: f64 = -1.0;

/// Up to this many elements, validation pre-fills and checks the whole
/// `[0, required)` range; beyond it only touched elements are handled.
const FULL_CHECK_LIMIT: u64 = 1 << 22;

/// Whether two different iterations touch a common element.
pub fn iterations_overlap(indices: &[u64], delta: u64, count: u64) -> bool {
    if count < 2 {
        return false;
    }
    if delta == 0 {
        return true;
    }
    let mut distinct = indices.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    for (a, &lo) in distinct.iter().enumerate() {
        for &hi in &distinct[a + 1..] {
            let d = hi - lo;
            if d % delta == 0 && d / delta < count {
                return true;
            }
        }
    }
    false
}

struct Prepared {
    threads: usize,
    delta: usize,
}

struct Record<'a> {
    out: &'a mut [f64],
    first: u64,
}

impl GatherSink for Record<'_> {
    fn observe(&mut self, i: u64, dst: &[f64]) {
        let at = (i - self.first) as usize * dst.len();
        self.out[at..at + dst.len()].copy_from_slice(dst);
    }
}

struct IdentityCheck<'a> {
    idx: &'a [u64],
    delta: u64,
    first_bad: Option<Mismatch>,
}

impl GatherSink for IdentityCheck<'_> {
    fn observe(&mut self, i: u64, dst: &[f64]) {
        if self.first_bad.is_some() {
            return;
        }
        for (j, (&got, &x)) in dst.iter().zip(self.idx).enumerate() {
            let element = i * self.delta + x;
            let expected = element as f64;
            if got != expected {
                self.first_bad = Some(Mismatch {
                    iteration: Some(i),
                    lane: Some(j),
                    element,
                    expected,
                    actual: got,
                });
                return;
            }
        }
    }
}

struct Encoded;

impl ScatterSource for Encoded {
    fn prepare(&mut self, i: u64, src: &mut [f64]) {
        let len = src.len();
        for (j, v) in src.iter_mut().enumerate() {
            *v = scatter_code(i, j, len);
        }
    }
}

pub struct Engine<T: Timer = MonotonicTimer> {
    arena: BufferArena,
    timer: T,
    checksum: f64,
}

impl<T: Timer> Engine<T> {
    /// Allocates the arena for `plan`.
    pub fn new(plan: ArenaPlan, timer: T) -> Result<Self, EngineError> {
        Ok(Self {
            arena: BufferArena::new(plan)?,
            timer,
            checksum: 0.0,
        })
    }

    /// Plans and allocates an arena large enough for every config in `batch`.
    pub fn for_batch(batch: &[RunConfig], timer: T) -> Result<Self, EngineError> {
        Self::new(plan_arena(batch)?, timer)
    }

    pub fn arena(&self) -> &BufferArena {
        &self.arena
    }

    pub fn arena_mut(&mut self) -> &mut BufferArena {
        &mut self.arena
    }

    /// Running fold of buffer contents observed after each timed run. Print
    /// it so the kernels' effects stay observable.
    pub fn checksum(&self) -> f64 {
        self.checksum
    }

    fn prepare(&mut self, config: &RunConfig) -> Result<Prepared, EngineError> {
        config.check()?;
        let needed = required_elements(config)?;
        let available = self.arena.large().len() as u64;
        if needed > available {
            return Err(EngineError::ArenaTooSmall { needed, available });
        }
        if config.pattern.len() as u64 > self.arena.plan().small_elements {
            return Err(EngineError::ArenaTooSmall {
                needed: config.pattern.len() as u64,
                available: self.arena.plan().small_elements,
            });
        }
        let threads = match config.backend {
            Backend::Serial => 1,
            Backend::Parallel { threads } => {
                if threads > self.arena.plan().max_threads {
                    return Err(EngineError::TooManyThreads {
                        threads,
                        available: self.arena.plan().max_threads,
                    });
                }
                threads.min(config.count.min(usize::MAX as u64) as usize)
            }
        };
        self.arena.load_indices(config.pattern.indices(), threads);
        Ok(Prepared {
            threads,
            // fits: needed <= large.len()
            delta: config.delta as usize,
        })
    }

    fn gather_with<S: GatherSink>(&mut self, config: &RunConfig, prep: &Prepared, hooks: &mut [S]) {
        gather_with(&mut self.arena, config, prep, hooks)
    }

    fn scatter_with<S: ScatterSource>(&mut self, config: &RunConfig, prep: &Prepared, hooks: &mut [S]) {
        scatter_with(&mut self.arena, config, prep, hooks)
    }

    fn timed_runs(
        &mut self,
        config: &RunConfig,
        prep: &Prepared,
    ) -> Result<KernelResult, EngineError> {
        let mut times = Vec::with_capacity(config.runs as usize);
        let mut hooks = vec![Opaque; prep.threads];
        for _ in 0..config.runs {
            let Self { arena, timer, .. } = self;
            let t = timer.time(&mut || match config.kernel {
                Kernel::Gather => gather_with(arena, config, prep, &mut hooks),
                Kernel::Scatter => scatter_with(arena, config, prep, &mut hooks),
            });
            times.push(t);
            self.fold_checksum(config);
        }
        KernelResult::from_times(config, times)
    }

    fn fold_checksum(&mut self, config: &RunConfig) {
        let probe = match config.kernel {
            Kernel::Gather => self.arena.small_slot(0)[0],
            Kernel::Scatter => self.arena.large()[config.pattern.indices()[0] as usize],
        };
        self.checksum += probe;
    }

    fn fill_thread_codes(&mut self, threads: usize, len: usize) {
        let stride = self.arena.small_stride();
        let (_, slots) = self.arena.split(threads);
        for (t, (small, _)) in slots.into_iter().enumerate() {
            debug_assert_eq!(small.len(), stride);
            for (j, v) in small[..len].iter_mut().enumerate() {
                *v = thread_code(t, j);
            }
        }
    }

    /// Timed gather runs.
    pub fn run_gather(&mut self, config: &RunConfig) -> Result<KernelResult, EngineError> {
        expect_kernel(config, Kernel::Gather)?;
        let prep = self.prepare(config)?;
        self.timed_runs(config, &prep)
    }

    /// Timed scatter runs. Source buffers hold [`thread_code`] values.
    pub fn run_scatter(&mut self, config: &RunConfig) -> Result<KernelResult, EngineError> {
        expect_kernel(config, Kernel::Scatter)?;
        let prep = self.prepare(config)?;
        self.fill_thread_codes(prep.threads, config.pattern.len());
        self.timed_runs(config, &prep)
    }

    pub fn run(&mut self, config: &RunConfig) -> Result<KernelResult, EngineError> {
        match config.kernel {
            Kernel::Gather => self.run_gather(config),
            Kernel::Scatter => self.run_scatter(config),
        }
    }

    /// One untimed pass, used to fault in pages and warm caches.
    pub fn warm_up(&mut self, config: &RunConfig) -> Result<(), EngineError> {
        let prep = self.prepare(config)?;
        let mut hooks = vec![Opaque; prep.threads];
        match config.kernel {
            Kernel::Gather => self.gather_with(config, &prep, &mut hooks),
            Kernel::Scatter => {
                self.fill_thread_codes(prep.threads, config.pattern.len());
                self.scatter_with(config, &prep, &mut hooks)
            }
        }
        Ok(())
    }

    /// Runs every config in order: one warm-up pass, then the timed runs.
    pub fn sweep(&mut self, batch: &[RunConfig]) -> Result<Vec<KernelResult>, EngineError> {
        batch
            .iter()
            .map(|config| {
                self.warm_up(config)?;
                self.run(config)
            })
            .collect()
    }

    /// Untimed gather that records every iteration's destination values,
    /// `count * len` entries in iteration order.
    pub fn trace_gather(&mut self, config: &RunConfig) -> Result<Vec<f64>, EngineError> {
        expect_kernel(config, Kernel::Gather)?;
        let prep = self.prepare(config)?;
        let len = config.pattern.len();
        let mut out = vec![0.0; config.count as usize * len];
        let mut hooks = Vec::with_capacity(prep.threads);
        let mut rest = out.as_mut_slice();
        for t in 0..prep.threads {
            let iters = partition(t, prep.threads, config.count);
            let (mine, tail) = rest.split_at_mut((iters.end - iters.start) as usize * len);
            hooks.push(Record {
                out: mine,
                first: iters.start,
            });
            rest = tail;
        }
        self.gather_with(config, &prep, &mut hooks);
        drop(hooks);
        Ok(out)
    }

    /// Untimed scatter in which lane `j` of iteration `i` stores
    /// [`scatter_code`]`(i, j, len)`.
    pub fn scatter_encoded(&mut self, config: &RunConfig) -> Result<(), EngineError> {
        expect_kernel(config, Kernel::Scatter)?;
        let prep = self.prepare(config)?;
        let mut hooks: Vec<Encoded> = (0..prep.threads).map(|_| Encoded).collect();
        self.scatter_with(config, &prep, &mut hooks);
        Ok(())
    }

    /// Checks one untimed pass against a direct interpretation of the access
    /// rule. Gathers read an identity-filled source (`large[k] = k`);
    /// scatters store [`scatter_code`] values over a [`SCATTER_SENTINEL`]
    /// fill and the final buffer is compared with serial last-writer-wins.
    ///
    /// Parallel scatters whose iterations overlap are refused, since their
    /// final values depend on thread interleaving.
    pub fn validate(&mut self, config: &RunConfig) -> Result<Verdict, EngineError> {
        let prep = self.prepare(config)?;
        let required = required_elements(config)?;
        let full = required <= FULL_CHECK_LIMIT;
        let idx = config.pattern.indices();
        let touched = || {
            (0..config.count).flat_map(move |i| idx.iter().map(move |&x| i * config.delta + x))
        };

        match config.kernel {
            Kernel::Gather => {
                let large = self.arena.large_mut();
                if full {
                    for (k, v) in large[..required as usize].iter_mut().enumerate() {
                        *v = k as f64;
                    }
                } else {
                    for k in touched() {
                        large[k as usize] = k as f64;
                    }
                }
                let mut hooks: Vec<IdentityCheck<'_>> = (0..prep.threads)
                    .map(|_| IdentityCheck {
                        idx,
                        delta: config.delta,
                        first_bad: None,
                    })
                    .collect();
                self.gather_with(config, &prep, &mut hooks);
                let first = hooks
                    .into_iter()
                    .filter_map(|h| h.first_bad)
                    .min_by_key(|m| (m.iteration, m.lane));
                Ok(first.map_or(Verdict::Pass, Verdict::Fail))
            }
            Kernel::Scatter => {
                if prep.threads > 1 && iterations_overlap(idx, config.delta, config.count) {
                    return Err(EngineError::NondeterministicOverlap {
                        name: config.display_name(),
                    });
                }
                let len = idx.len();
                let mut expected = BTreeMap::new();
                for i in 0..config.count {
                    for (j, &x) in idx.iter().enumerate() {
                        expected.insert(i * config.delta + x, scatter_code(i, j, len));
                    }
                }
                let large = self.arena.large_mut();
                if full {
                    large[..required as usize].fill(SCATTER_SENTINEL);
                } else {
                    for &k in expected.keys() {
                        large[k as usize] = SCATTER_SENTINEL;
                    }
                }
                let mut hooks: Vec<Encoded> = (0..prep.threads).map(|_| Encoded).collect();
                self.scatter_with(config, &prep, &mut hooks);

                let large = self.arena.large();
                let mismatch = |element: u64, expected: f64| {
                    let actual = large[element as usize];
                    (actual != expected).then_some(Mismatch {
                        iteration: None,
                        lane: None,
                        element,
                        expected,
                        actual,
                    })
                };
                let first = if full {
                    (0..required).find_map(|k| {
                        mismatch(k, expected.get(&k).copied().unwrap_or(SCATTER_SENTINEL))
                    })
                } else {
                    expected.iter().find_map(|(&k, &v)| mismatch(k, v))
                };
                Ok(first.map_or(Verdict::Pass, Verdict::Fail))
            }
        }
    }
}

fn gather_with<S: GatherSink>(
    arena: &mut BufferArena,
    config: &RunConfig,
    prep: &Prepared,
    hooks: &mut [S],
) {
    let (large, slots) = arena.split(prep.threads);
    let lanes = slots
        .into_iter()
        .zip(hooks.iter_mut())
        .map(|((small, idx), hook)| Lane { small, idx, hook })
        .collect();
    // SAFETY: `Engine::prepare` checked required_elements(config) <= large.len().
    unsafe { gather_pass(large, prep.delta, config.count, lanes) }
}

fn scatter_with<S: ScatterSource>(
    arena: &mut BufferArena,
    config: &RunConfig,
    prep: &Prepared,
    hooks: &mut [S],
) {
    let (large, slots) = arena.split(prep.threads);
    let lanes = slots
        .into_iter()
        .zip(hooks.iter_mut())
        .map(|((small, idx), hook)| Lane { small, idx, hook })
        .collect();
    // SAFETY: as in gather_with.
    unsafe { scatter_pass(large, prep.delta, config.count, lanes) }
}

fn expect_kernel(config: &RunConfig, expected: Kernel) -> Result<(), EngineError> {
    if config.kernel == expected {
        Ok(())
    } else {
        Err(EngineError::WrongKernel {
            expected,
            got: config.kernel,
        })
    }
}
