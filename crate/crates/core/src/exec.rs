//! Pluggable data parallelism and timing.
//!
//! Algorithms split work into fixed-size chunks whose boundaries never depend
//! on the executor, then reduce the chunk results in index order. Any
//! executor therefore produces bit-identical results.

use alloc::vec::Vec;

/// Maps a function over `0..n`, returning results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Source of wall-clock milliseconds for training reports.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Reports zero for every reading.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Splits `0..n` into `chunk`-sized ranges; the last may be shorter.
pub(crate) fn chunk_ranges(n: usize, chunk: usize) -> Vec<core::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}
