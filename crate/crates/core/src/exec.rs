//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) the mapping helpers fan work out over
//! the rayon pool; without it they degrade to plain iteration. Outputs are
//! collected in input order, so results are bit-identical either way. The
//! sequential variants stay available under both configurations for the
//! benchmark suite comparing the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Map `f` over an index range, preserving order.
pub fn map_indices<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Apply `f` to disjoint chunks of `data` in place.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Always-sequential counterpart of [`map`], kept for benchmarking the
/// parallel dispatch against single-threaded execution.
pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Always-sequential counterpart of [`map_indices`].
pub fn map_indices_sequential<U, F>(len: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..257).collect();
        let a = map(&items, |x| x * x + 1);
        let b = map_sequential(&items, |x| x * x + 1);
        assert_eq!(a, b);
        let c = map_indices(100, |i| i as u64 * 3);
        let d = map_indices_sequential(100, |i| i as u64 * 3);
        assert_eq!(c, d);
    }

    #[test]
    fn chunked_mutation_covers_all() {
        let mut data = vec![0u32; 103];
        for_each_chunk_mut(&mut data, 16, |i, c| {
            for v in c.iter_mut() {
                *v = i as u32 + 1;
            }
        });
        assert!(data.iter().all(|&v| v > 0));
    }
}
