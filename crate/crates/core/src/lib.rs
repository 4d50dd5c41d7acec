//! Gather/scatter memory benchmark.
//!
//! Memory access patterns are an index buffer plus a delta: iteration `i`
//! gathers (or scatters) the elements `i * delta + idx[j]` of a large shared
//! buffer into (from) a small per-thread buffer. Bandwidth counts only the
//! 8-byte elements moved, `8 * len(idx) * count` bytes per run, over the
//! fastest of the timed runs.
//!
//! * [`patterns`]: index buffers and the pattern grammar
//! * [`planner`]: run configurations, JSON/flag input, arena sizing
//! * [`engine`]: buffer arena, serial/parallel kernels, timing, validation
//! * [`metrics`]: batch statistics, correlation, normalised plot data
//! * [`suites`]: built-in uniform-stride, STREAM-like and application suites
//! * [`cli`]: the `gsbench` command line and report emitters

pub mod cli;
pub mod engine;
pub mod metrics;
pub mod patterns;
pub mod planner;
pub mod suites;

pub use engine::{Engine, KernelResult};
pub use patterns::{parse_pattern, IndexPattern};
pub use planner::{Backend, Kernel, RunConfig};
