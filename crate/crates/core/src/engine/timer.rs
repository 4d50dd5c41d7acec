use std::sync::atomic::{compiler_fence, fence, Ordering};
use std::time::Instant;

/// Measures one timed run. Implementations return seconds.
pub trait Timer {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64;
}

/// Wall-clock timing on the monotonic clock.
#[derive(Debug, Default, Clone, Copy)]
pub struct MonotonicTimer;

/// Floor applied to measured durations, so bandwidth stays finite for runs
/// shorter than the clock can resolve.
pub const MIN_RESOLUTION_S: f64 = 1e-9;

impl Timer for MonotonicTimer {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64 {
        fence(Ordering::SeqCst);
        compiler_fence(Ordering::SeqCst);
        let start = Instant::now();
        work();
        compiler_fence(Ordering::SeqCst);
        let secs = start.elapsed().as_secs_f64();
        secs.max(MIN_RESOLUTION_S)
    }
}

/// Deterministic timer for tests: executes the work and reports scripted
/// durations, cycling through them.
#[derive(Debug, Clone)]
pub struct FakeTimer {
    durations: Vec<f64>,
    next: usize,
}

impl FakeTimer {
    pub fn constant(secs: f64) -> Self {
        Self::sequence(vec![secs])
    }

    pub fn sequence(durations: Vec<f64>) -> Self {
        assert!(!durations.is_empty(), "fake timer needs at least one duration");
        Self { durations, next: 0 }
    }
}

impl Timer for FakeTimer {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64 {
        work();
        let d = self.durations[self.next % self.durations.len()];
        self.next += 1;
        d
    }
}

impl<T: Timer + ?Sized> Timer for &mut T {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64 {
        (**self).time(work)
    }
}
