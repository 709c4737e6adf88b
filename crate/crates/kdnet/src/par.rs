//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these fan out over the rayon pool;
//! without it they run sequentially with identical results. Results are
//! collected in index order, so reductions downstream stay deterministic
//! regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
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

/// Runs `f(row_index, row)` over consecutive `width`-sized rows of `data`.
pub fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert_eq!(data.len() % width.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// Configures the global thread pool size. A `None` keeps the default
/// (all cores). Calling this twice is a no-op; without the `parallel`
/// feature it does nothing.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            // Ignore the error when a pool already exists.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}
