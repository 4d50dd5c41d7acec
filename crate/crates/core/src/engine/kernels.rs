//! Gather/scatter inner loops and the thread fork/join around them.
//!
//! Iteration `i` uses base address `i * delta`; lane `j` touches
//! `large[i * delta + idx[j]]`. Iterations are split into contiguous blocks,
//! iteration `i` going to thread `floor(i * T / count)`.

use std::hint::black_box;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

/// Iterations assigned to `thread` out of `threads`.
pub fn partition(thread: usize, threads: usize, count: u64) -> Range<u64> {
    let start = |t: usize| -> u64 {
        let num = t as u128 * count as u128;
        num.div_ceil(threads as u128) as u64
    };
    start(thread)..start(thread + 1)
}

/// Thread that owns iteration `i`.
pub fn thread_of(i: u64, threads: usize, count: u64) -> usize {
    (i as u128 * threads as u128 / count as u128) as usize
}

/// Observes the destination buffer after each gather iteration.
pub(crate) trait GatherSink: Send {
    fn observe(&mut self, i: u64, dst: &[f64]);
}

/// Keeps the loads alive without recording anything.
#[derive(Clone, Copy, Default)]
pub(crate) struct Opaque;

impl GatherSink for Opaque {
    #[inline(always)]
    fn observe(&mut self, _i: u64, dst: &[f64]) {
        black_box(dst);
    }
}

/// Supplies scatter source values before each iteration.
pub(crate) trait ScatterSource: Send {
    fn prepare(&mut self, i: u64, src: &mut [f64]);
}

impl ScatterSource for Opaque {
    #[inline(always)]
    fn prepare(&mut self, _i: u64, _src: &mut [f64]) {}
}

/// Everything one thread needs for its block.
pub(crate) struct Lane<'a, S> {
    pub small: &'a mut [f64],
    pub idx: &'a [usize],
    pub hook: &'a mut S,
}

/// # Safety
/// `(iters.end - 1) * delta + max(idx) < large.len()` for non-empty `iters`.
#[inline]
unsafe fn gather_block<S: GatherSink>(
    large: &[f64],
    delta: usize,
    iters: Range<u64>,
    lane: Lane<'_, S>,
) {
    let dst = &mut lane.small[..lane.idx.len()];
    for i in iters {
        let base = i as usize * delta;
        for (d, &k) in dst.iter_mut().zip(lane.idx) {
            debug_assert!(base + k < large.len());
            *d = *large.get_unchecked(base + k);
        }
        lane.hook.observe(i, dst);
    }
}

/// # Safety
/// Same bound as [`gather_block`].
#[inline]
unsafe fn scatter_block_exclusive<S: ScatterSource>(
    large: &mut [f64],
    delta: usize,
    iters: Range<u64>,
    lane: Lane<'_, S>,
) {
    let src = &mut lane.small[..lane.idx.len()];
    for i in iters {
        lane.hook.prepare(i, src);
        let base = i as usize * delta;
        for (&v, &k) in src.iter().zip(lane.idx) {
            debug_assert!(base + k < large.len());
            *large.get_unchecked_mut(base + k) = v;
        }
        // stores to a reused footprint must not be merged across iterations
        black_box(&mut *large);
    }
}

/// # Safety
/// Same bound as [`gather_block`].
#[inline]
unsafe fn scatter_block_shared<S: ScatterSource>(
    large: &[AtomicU64],
    delta: usize,
    iters: Range<u64>,
    lane: Lane<'_, S>,
) {
    let src = &mut lane.small[..lane.idx.len()];
    for i in iters {
        lane.hook.prepare(i, src);
        let base = i as usize * delta;
        for (&v, &k) in src.iter().zip(lane.idx) {
            debug_assert!(base + k < large.len());
            large.get_unchecked(base + k).store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Runs all `count` iterations. The first lane runs on the calling thread,
/// the rest on scoped workers.
///
/// # Safety
/// `(count - 1) * delta + max(idx) < large.len()` for every lane's `idx`.
pub(crate) unsafe fn gather_pass<S: GatherSink>(
    large: &[f64],
    delta: usize,
    count: u64,
    lanes: Vec<Lane<'_, S>>,
) {
    let threads = lanes.len();
    if threads == 1 {
        let lane = lanes.into_iter().next().unwrap();
        return gather_block(large, delta, 0..count, lane);
    }
    thread::scope(|s| {
        let mut lanes = lanes.into_iter().enumerate();
        let (_, first) = lanes.next().unwrap();
        for (t, lane) in lanes {
            let iters = partition(t, threads, count);
            // SAFETY: forwarded from the caller.
            s.spawn(move || unsafe { gather_block(large, delta, iters, lane) });
        }
        gather_block(large, delta, partition(0, threads, count), first);
    });
}

/// Scatter counterpart of [`gather_pass`]. A single lane writes through the
/// exclusive slice; several lanes share the buffer through relaxed atomic
/// stores, so overlapping writes race benignly at word granularity.
///
/// # Safety
/// As for [`gather_pass`].
pub(crate) unsafe fn scatter_pass<S: ScatterSource>(
    large: &mut super::AlignedBuffer,
    delta: usize,
    count: u64,
    lanes: Vec<Lane<'_, S>>,
) {
    let threads = lanes.len();
    if threads == 1 {
        let lane = lanes.into_iter().next().unwrap();
        return scatter_block_exclusive(large, delta, 0..count, lane);
    }
    let shared = large.as_atomic();
    thread::scope(|s| {
        let mut lanes = lanes.into_iter().enumerate();
        let (_, first) = lanes.next().unwrap();
        for (t, lane) in lanes {
            let iters = partition(t, threads, count);
            // SAFETY: forwarded from the caller.
            s.spawn(move || unsafe { scatter_block_shared(shared, delta, iters, lane) });
        }
        scatter_block_shared(shared, delta, partition(0, threads, count), first);
    });
}
