//! Execution-mode switch for the data-parallel kernels.
//!
//! Every parallel kernel partitions its work into chunks whose boundaries depend
//! only on the problem size, never on the thread count, and merges partial
//! results in chunk-index order. Parallel runs are therefore reproducible
//! across thread counts. Without the `parallel` feature every mode runs
//! sequentially.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    /// Single-threaded, accumulation in natural index order (bit-reproducible).
    Sequential,
    /// Chunked work distributed over the rayon pool.
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Applies `f(offset, input_chunk, output_chunk)` over matching chunks of two slices.
pub fn for_each_chunk_zip<A, B, F>(mode: ExecMode, input: &[A], output: &mut [B], chunk: usize, f: F)
where
    A: Sync,
    B: Send,
    F: Fn(usize, &[A], &mut [B]) + Sync + Send,
{
    debug_assert_eq!(input.len(), output.len());
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        input
            .par_chunks(chunk)
            .zip(output.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(i, (a, b))| f(i * chunk, a, b));
        return;
    }
    let _ = mode;
    for (i, (a, b)) in input.chunks(chunk).zip(output.chunks_mut(chunk)).enumerate() {
        f(i * chunk, a, b);
    }
}

/// Evaluates `f(i)` for `i in 0..n` and returns the results in index order.
pub fn map_indices<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Splits `0..n` into `ceil(n / chunk)` contiguous ranges.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_everything_once() {
        let r = chunk_ranges(10, 4);
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
        assert!(chunk_ranges(0, 4).is_empty());
    }

    #[test]
    fn modes_agree() {
        let input: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let mut a = vec![0.0; 1000];
        let mut b = vec![0.0; 1000];
        let sq = |off: usize, x: &[f64], y: &mut [f64]| {
            for (j, (xi, yi)) in x.iter().zip(y.iter_mut()).enumerate() {
                *yi = xi * xi + off as f64 * 0.0 + j as f64 * 0.0;
            }
        };
        for_each_chunk_zip(ExecMode::Sequential, &input, &mut a, 64, sq);
        for_each_chunk_zip(ExecMode::Parallel, &input, &mut b, 64, sq);
        assert_eq!(a, b);
        let s: Vec<usize> = map_indices(ExecMode::Parallel, 5, |i| i * 2);
        assert_eq!(s, vec![0, 2, 4, 6, 8]);
    }
}
