//! Work distribution seam.
//!
//! Kernels in this crate split their work into a fixed number of chunks and
//! reduce the per-chunk results in chunk order. Only the scheduling of the
//! chunks is delegated to an [`Executor`], so results do not depend on how
//! many workers ran them.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluate `f(0), f(1), .., f(n - 1)` and return the results in index
    /// order.
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
