//! Deterministic chunked reduction.
//!
//! Work items (usually path or noise seeds) are split into contiguous
//! chunks of a fixed size. Each chunk is folded sequentially in item
//! order; the per-chunk results are collected in chunk order and merged
//! sequentially by the caller. The thread pool only decides which chunk is
//! folded when, never how numbers combine, so output bits depend on
//! `(items, chunk_size)` alone and not on the thread count.
//!
//! With the `parallel` feature (default) chunks are folded on the rayon
//! pool; without it the same chunk layout is folded on one thread.
//! `fold_chunks_seq` is always available so benchmarks can compare lanes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Selects the execution lane for a chunked reduction. `Auto` uses the
/// rayon pool when the `parallel` feature is on; `Sequential` always folds
/// on the calling thread. Both produce bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Auto,
    Sequential,
}

/// [`fold_chunks`] with an explicit lane choice.
pub fn fold_chunks_in<T, A, F>(lane: Lane, items: &[T], chunk_size: usize, fold: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
{
    match lane {
        Lane::Auto => fold_chunks(items, chunk_size, fold),
        Lane::Sequential => fold_chunks_seq(items, chunk_size, fold),
    }
}

/// Folds each chunk with `fold`, returning per-chunk results in chunk order.
#[cfg(feature = "parallel")]
pub fn fold_chunks<T, A, F>(items: &[T], chunk_size: usize, fold: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
{
    assert!(chunk_size > 0, "chunk_size must be positive");
    items.par_chunks(chunk_size).map(fold).collect()
}

/// Folds each chunk with `fold`, returning per-chunk results in chunk order.
#[cfg(not(feature = "parallel"))]
pub fn fold_chunks<T, A, F>(items: &[T], chunk_size: usize, fold: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
{
    fold_chunks_seq(items, chunk_size, fold)
}

/// Single-threaded reference lane with the identical chunk layout.
pub fn fold_chunks_seq<T, A, F>(items: &[T], chunk_size: usize, fold: F) -> Vec<A>
where
    F: Fn(&[T]) -> A,
{
    assert!(chunk_size > 0, "chunk_size must be positive");
    items.chunks(chunk_size).map(fold).collect()
}

/// Chunked fold followed by an in-order sequential merge.
pub fn reduce_chunks<T, A, F, M>(items: &[T], chunk_size: usize, fold: F, merge: M) -> Option<A>
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
    M: Fn(&mut A, A),
{
    let mut parts = fold_chunks(items, chunk_size, fold).into_iter();
    let mut acc = parts.next()?;
    for p in parts {
        merge(&mut acc, p);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossy_sum(xs: &[f64]) -> f64 {
        // Deliberately non-associative payload: result depends on chunking.
        xs.iter().fold(0.0f64, |a, x| (a + x) * (1.0 + 1e-16) - 1e-16 * a)
    }

    #[test]
    fn parallel_and_sequential_lanes_agree_bitwise() {
        let items: Vec<f64> = (0..10_000).map(|i| ((i * 37 % 101) as f64).exp().sin()).collect();
        for chunk in [1, 7, 256, 10_000] {
            let par = fold_chunks(&items, chunk, lossy_sum);
            let seq = fold_chunks_seq(&items, chunk, lossy_sum);
            assert_eq!(par.len(), seq.len());
            for (a, b) in par.iter().zip(&seq) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn reduce_merges_in_chunk_order() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64).cos()).collect();
        let merged = reduce_chunks(&items, 64, lossy_sum, |a, b| *a += b).unwrap();
        let parts = fold_chunks_seq(&items, 64, lossy_sum);
        let direct = parts.iter().skip(1).fold(parts[0], |a, b| a + b);
        assert_eq!(merged.to_bits(), direct.to_bits());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn result_is_thread_count_invariant() {
        let items: Vec<f64> = (0..50_000).map(|i| ((i as f64) * 0.1).sin()).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| reduce_chunks(&items, 256, lossy_sum, |a, b| *a += b).unwrap())
        };
        assert_eq!(run(1).to_bits(), run(8).to_bits());
    }
}
