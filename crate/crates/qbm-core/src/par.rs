//! Deterministic data-parallel helpers.
//!
//! Every parallel construct in this crate maps an index range to a `Vec` and
//! reduces sequentially afterwards. That makes the `parallel` feature purely a
//! throughput switch: summation order, and therefore every floating-point
//! result, is identical with and without it.

/// Maps `f` over `0..n` into a `Vec`, in parallel when the `parallel` feature
/// is enabled.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice into a `Vec`, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Parallel map followed by a sequential left-to-right sum. The reduction
/// order is the index order regardless of thread scheduling.
pub fn sum_indexed<T, F>(n: usize, zero: T, f: F) -> T
where
    T: Send + std::ops::Add<Output = T>,
    F: Fn(usize) -> T + Sync + Send,
{
    map_collect(n, f).into_iter().fold(zero, |a, b| a + b)
}
