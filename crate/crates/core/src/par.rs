//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run sequentially. Results are always returned in input order and
//! reductions are merged sequentially in chunk order, so outputs are
//! bit-identical regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of worker threads available to the helpers.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Ordered parallel map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Ordered parallel map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();

    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Fold fixed-size chunks in parallel, then merge the partial results
/// sequentially in chunk order.
///
/// The chunk size is fixed by the caller rather than derived from the thread
/// count; that is what keeps floating-point sums reproducible.
pub fn chunked_fold<T, A, I, F, M>(items: &[T], chunk: usize, init: I, fold: F, merge: M) -> Option<A>
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize, &T) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunk = chunk.max(1);
    let n_chunks = items.len().div_ceil(chunk);
    let partials = map_range(n_chunks, |c| {
        let start = c * chunk;
        let end = (start + chunk).min(items.len());
        let mut acc = init();
        for (i, item) in items[start..end].iter().enumerate() {
            fold(&mut acc, start + i, item);
        }
        acc
    });
    let mut iter = partials.into_iter();
    let mut acc = iter.next()?;
    for p in iter {
        merge(&mut acc, p);
    }
    Some(acc)
}
