//! Data-parallel helpers. With the `parallel` feature (default) the work
//! fans out over rayon; without it the same code runs sequentially.
//! Reductions use fixed chunk boundaries that depend only on the input
//! length, never on the worker count, so both modes produce bit-identical
//! floating-point results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples folded per chunk before chunk results combine in order.
pub(crate) const CHUNK: usize = 16;

pub(crate) fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Chunked map-reduce: each fixed-size chunk folds sequentially in input
/// order, then the per-chunk results combine in chunk order. Returns
/// `None` for empty input.
pub(crate) fn try_fold_chunks<T, R, E, F, G>(
    items: &[T],
    f: F,
    combine: G,
) -> Result<Option<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
    G: Fn(R, &R) -> R + Sync + Send,
{
    let chunks: Vec<&[T]> = items.chunks(CHUNK).collect();
    let fold_chunk = |chunk: &&[T]| -> Result<Option<R>, E> {
        let mut acc: Option<R> = None;
        for item in *chunk {
            let r = f(item)?;
            acc = Some(match acc {
                Some(a) => combine(a, &r),
                None => r,
            });
        }
        Ok(acc)
    };
    let partials = try_map(&chunks, fold_chunk)?;
    let mut total: Option<R> = None;
    for p in partials.into_iter().flatten() {
        total = Some(match total {
            Some(t) => combine(t, &p),
            None => p,
        });
    }
    Ok(total)
}
