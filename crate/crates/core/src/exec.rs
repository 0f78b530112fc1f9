//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the current rayon pool, otherwise it runs on the calling thread. Results
//! never depend on the schedule: every closure receives its own index and
//! callers derive any randomness from it.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n`, collected in index order.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Runs `f(i, chunk)` over consecutive `chunk_len`-sized chunks of `data`.
pub(crate) fn for_each_chunk<F>(data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Like [`map_indexed`] but over mutable items, stopping at the first error
/// in index order.
pub(crate) fn try_for_each_mut<T, E, F>(items: &mut [T], f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut T) -> Result<(), E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(), E>> = items
        .par_iter_mut()
        .enumerate()
        .map(|(i, t)| f(i, t))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(), E>> = items
        .iter_mut()
        .enumerate()
        .map(|(i, t)| f(i, t))
        .collect();
    results.into_iter().collect()
}
