//! Row-parallel helpers. Every reduction happens after the parallel map, in
//! index order, so results are bit-identical for any number of threads.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(0..n)` and returns the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fills consecutive `width`-sized chunks of `buf`; `f` gets the chunk index.
#[cfg(feature = "parallel")]
pub fn fill_chunks<F>(buf: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    buf.par_chunks_mut(width).enumerate().for_each(|(t, row)| f(t, row));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_chunks<F>(buf: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    buf.chunks_mut(width).enumerate().for_each(|(t, row)| f(t, row));
}

/// Splits `0..n` into `blocks` contiguous ranges (fixed by `n` and `blocks`
/// alone, never by the thread count) and evaluates `f` on each, in order.
#[cfg(feature = "parallel")]
pub fn map_blocks<T, F>(n: usize, blocks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(core::ops::Range<usize>) -> T + Sync + Send,
{
    let blocks = blocks.clamp(1, n.max(1));
    map_indices(blocks, |b| f((b * n / blocks)..((b + 1) * n / blocks)))
}

#[cfg(not(feature = "parallel"))]
pub fn map_blocks<T, F>(n: usize, blocks: usize, f: F) -> Vec<T>
where
    F: Fn(core::ops::Range<usize>) -> T,
{
    let blocks = blocks.clamp(1, n.max(1));
    map_indices(blocks, |b| f((b * n / blocks)..((b + 1) * n / blocks)))
}
