//! Execution policy for the data-parallel loops.

use std::ops::Range;

/// How to run an embarrassingly parallel loop.
///
/// Results never depend on the choice: every per-item computation draws from
/// its own counter-addressed random stream and reductions are over integers
/// or performed in index order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the current rayon pool. Falls back to sequential when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Block length for index-range reductions.
pub(crate) const BLOCK: u64 = 8192;

/// `f(i)` for every `i < n`, in index order.
pub(crate) fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps every item of a slice, preserving order.
pub(crate) fn map_slice<S, T, F>(items: &[S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Sums `f` over fixed blocks of `0..n`. Block boundaries do not depend on
/// the execution policy.
pub(crate) fn sum_blocks<F>(n: u64, exec: Execution, f: F) -> u64
where
    F: Fn(Range<u64>) -> u64 + Sync + Send,
{
    let blocks = n.div_ceil(BLOCK);
    let block = |b: u64| f(b * BLOCK..((b + 1) * BLOCK).min(n));
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..blocks).into_par_iter().map(block).sum();
    }
    let _ = exec;
    (0..blocks).map(block).sum()
}
