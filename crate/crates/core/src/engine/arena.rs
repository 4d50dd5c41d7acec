use std::alloc::{self, Layout};
use std::ops::{Deref, DerefMut};
use std::ptr::NonNull;
use std::sync::atomic::AtomicU64;

use crate::planner::ArenaPlan;

use super::EngineError;

/// Alignment of every arena buffer. Two lines, so adjacent-line prefetch
/// cannot couple neighbouring per-thread buffers.
pub const ARENA_ALIGN: usize = 128;
const WORDS_PER_ALIGN: usize = ARENA_ALIGN / std::mem::size_of::<f64>();

/// Zero-initialised, 128-byte aligned buffer of `f64` words.
pub struct AlignedBuffer {
    ptr: NonNull<f64>,
    len: usize,
    layout: Layout,
}

// SAFETY: the buffer uniquely owns its allocation.
unsafe impl Send for AlignedBuffer {}
unsafe impl Sync for AlignedBuffer {}

impl AlignedBuffer {
    pub fn zeroed(len: usize) -> Result<Self, EngineError> {
        let bytes = len
            .max(1)
            .checked_mul(std::mem::size_of::<f64>())
            .ok_or(EngineError::Allocation { bytes: u64::MAX })?;
        let layout = Layout::from_size_align(bytes, ARENA_ALIGN).map_err(|_| EngineError::Allocation {
            bytes: bytes as u64,
        })?;
        // SAFETY: layout has non-zero size.
        let raw = unsafe { alloc::alloc_zeroed(layout) };
        let ptr = NonNull::new(raw as *mut f64).ok_or(EngineError::Allocation {
            bytes: bytes as u64,
        })?;
        Ok(Self { ptr, len, layout })
    }

    /// The same memory viewed as atomics, for racy multi-writer stores.
    pub fn as_atomic(&mut self) -> &[AtomicU64] {
        // SAFETY: AtomicU64 has the size of u64/f64 and its alignment (8) is
        // satisfied by ARENA_ALIGN. The exclusive borrow guarantees no plain
        // accesses overlap the atomic view's lifetime.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr() as *const AtomicU64, self.len) }
    }
}

impl Deref for AlignedBuffer {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        // SAFETY: ptr is valid for len zero-initialised f64s.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }
}

impl DerefMut for AlignedBuffer {
    fn deref_mut(&mut self) -> &mut [f64] {
        // SAFETY: as above, and &mut self is exclusive.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }
}

impl Drop for AlignedBuffer {
    fn drop(&mut self) {
        // SAFETY: allocated in `zeroed` with this layout.
        unsafe { alloc::dealloc(self.ptr.as_ptr() as *mut u8, self.layout) }
    }
}

/// One thread's small slot and index copy.
pub(crate) type LaneSlot<'a> = (&'a mut [f64], &'a [usize]);

/// All memory for one batch, allocated before any timing.
///
/// `large` is the shared gather source / scatter destination. Each thread
/// owns one slot of `small`, padded to a multiple of [`ARENA_ALIGN`] so no two
/// slots share a cache line, plus a private copy of the index buffer.
pub struct BufferArena {
    plan: ArenaPlan,
    large: AlignedBuffer,
    small: AlignedBuffer,
    small_stride: usize,
    indices: Vec<Vec<usize>>,
}

impl BufferArena {
    pub fn new(plan: ArenaPlan) -> Result<Self, EngineError> {
        let too_big = |elements: u64| EngineError::Allocation {
            bytes: elements.saturating_mul(8),
        };
        let large_len = usize::try_from(plan.large_elements).map_err(|_| too_big(plan.large_elements))?;
        let small_len = usize::try_from(plan.small_elements).map_err(|_| too_big(plan.small_elements))?;
        let threads = plan.max_threads.max(1);
        let small_stride = small_len.max(1).div_ceil(WORDS_PER_ALIGN) * WORDS_PER_ALIGN;

        let large = AlignedBuffer::zeroed(large_len)?;
        let small = AlignedBuffer::zeroed(
            small_stride
                .checked_mul(threads)
                .ok_or(too_big(u64::MAX))?,
        )?;
        let indices = (0..threads).map(|_| Vec::with_capacity(small_len)).collect();
        Ok(Self {
            plan,
            large,
            small,
            small_stride,
            indices,
        })
    }

    pub fn plan(&self) -> &ArenaPlan {
        &self.plan
    }

    pub fn large(&self) -> &[f64] {
        &self.large
    }

    pub fn large_mut(&mut self) -> &mut [f64] {
        &mut self.large
    }

    /// Padded length of one per-thread small slot, in elements.
    pub fn small_stride(&self) -> usize {
        self.small_stride
    }

    pub fn small_slot(&self, thread: usize) -> &[f64] {
        &self.small[thread * self.small_stride..(thread + 1) * self.small_stride]
    }

    pub(crate) fn load_indices(&mut self, pattern: &[u64], threads: usize) {
        for copy in &mut self.indices[..threads] {
            copy.clear();
            // capacity was reserved for the largest pattern in the plan
            copy.extend(pattern.iter().map(|&x| x as usize));
        }
    }

    /// Borrows the pieces a kernel needs: the large buffer, and per thread
    /// the small slot and index copy.
    pub(crate) fn split(
        &mut self,
        threads: usize,
    ) -> (&mut AlignedBuffer, Vec<LaneSlot<'_>>) {
        let slots = self
            .small
            .chunks_exact_mut(self.small_stride)
            .zip(self.indices.iter())
            .take(threads)
            .map(|(s, i)| (s, i.as_slice()))
            .collect();
        (&mut self.large, slots)
    }
}
