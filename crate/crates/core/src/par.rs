//! Data-parallel helpers with a sequential fallback.
//!
//! The heavy loops in this crate — per-graph kernel forward/backward passes
//! over a database, independent training restarts, benchmark grids — are all
//! maps over an index range. With the default `parallel` feature they run on
//! rayon; without it they run as plain iterators. Either way results are
//! collected **in index order** and callers reduce them sequentially, so
//! every output is bit-identical across the two builds (floating-point
//! summation order never depends on scheduling).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice with indices, returning results in slice order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Caps the rayon thread pool. A no-op in sequential builds and after the
/// global pool has already been initialized.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let v = map_slice(&items, |i, x| x + i as f64);
        assert_eq!(v, (0..64).map(|i| 2.0 * i as f64).collect::<Vec<_>>());
    }
}
