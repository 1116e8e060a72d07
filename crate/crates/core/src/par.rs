//! Data-parallel primitives with a sequential fallback.
//!
//! Every reduction is split into fixed-size chunks whose partial results are
//! merged in chunk order, so the floating-point result does not depend on the
//! number of worker threads or on whether the `parallel` feature is enabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items folded sequentially before partial results are merged.
pub const CHUNK: usize = 512;

/// Applies `f` to every `stride`-sized block of `data`, passing the block index.
pub fn for_each_block<F>(data: &mut [f64], stride: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if stride == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(i, block)| f(i, block));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(stride)
        .enumerate()
        .for_each(|(i, block)| f(i, block));
}

/// Like [`for_each_block`] over two buffers with their own strides, block `i`
/// of each being handed to `f` together.
pub fn for_each_block2<F>(a: &mut [f64], sa: usize, b: &mut [f64], sb: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    if sa == 0 || sb == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    a.par_chunks_mut(sa)
        .zip(b.par_chunks_mut(sb))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
    #[cfg(not(feature = "parallel"))]
    a.chunks_mut(sa)
        .zip(b.chunks_mut(sb))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

/// Maps `0..n` through `f`, preserving order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
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

/// Deterministic chunked reduction over `0..n`.
///
/// `fold` accumulates one index into a chunk-local accumulator created by
/// `init`; chunk accumulators are then merged left to right with `merge`.
pub fn reduce<A, I, F, M>(n: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let partial = map(chunks, |c| {
        let mut acc = init();
        let end = ((c + 1) * CHUNK).min(n);
        for i in c * CHUNK..end {
            fold(&mut acc, i);
        }
        acc
    });
    let mut out = init();
    for p in partial {
        merge(&mut out, p);
    }
    out
}

/// Runs `f` inside a pool with exactly `threads` workers. Without the
/// `parallel` feature this just calls `f`.
pub fn with_threads<T, F>(threads: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Whether the crate was built with the rayon backend.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
