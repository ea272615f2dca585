//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, [`Parallelism::Threads`] runs on a rayon pool;
//! without it every mode runs sequentially. Outputs are always returned in
//! input order, so results never depend on scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Worker threads; `0` means one per logical core.
    Threads(usize),
    #[default]
    Auto,
}

impl Parallelism {
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Parallelism::Sequential,
            Some(k) => Parallelism::Threads(k),
            None => Parallelism::Auto,
        }
    }

    pub fn is_sequential(self) -> bool {
        !cfg!(feature = "parallel") || self == Parallelism::Sequential
    }
}

/// `f` applied to every item, in input order.
pub fn map<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            Parallelism::Sequential => items.iter().map(f).collect(),
            Parallelism::Auto => items.par_iter().map(f).collect(),
            Parallelism::Threads(k) => with_pool(k, || items.par_iter().map(&f).collect()),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = mode;
        items.iter().map(f).collect()
    }
}

/// Like [`map`] over `0..n`.
pub fn map_range<R, F>(n: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            Parallelism::Sequential => (0..n).map(f).collect(),
            Parallelism::Auto => (0..n).into_par_iter().map(f).collect(),
            Parallelism::Threads(k) => with_pool(k, || (0..n).into_par_iter().map(&f).collect()),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = mode;
        (0..n).map(f).collect()
    }
}

/// Fold `0..n` in fixed-size chunks and combine the partial results in chunk
/// order. `chunk` must be > 0.
pub fn chunked_reduce<A, F, G>(n: usize, chunk: usize, mode: Parallelism, fold: F, combine: G) -> Option<A>
where
    A: Send,
    F: Fn(std::ops::Range<usize>) -> A + Sync + Send,
    G: Fn(A, A) -> A,
{
    let chunks = n.div_ceil(chunk);
    let parts = map_range(chunks, mode, |c| fold(c * chunk..((c + 1) * chunk).min(n)));
    parts.into_iter().reduce(combine)
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(&items, Parallelism::Sequential, |x| x * x);
        assert_eq!(seq, map(&items, Parallelism::Auto, |x| x * x));
        assert_eq!(seq, map(&items, Parallelism::Threads(3), |x| x * x));
        assert_eq!(seq, map_range(1000, Parallelism::Threads(2), |i| (i * i) as u64));
    }

    #[test]
    fn chunked_reduce_matches_plain_sum() {
        let total = chunked_reduce(10_001, 64, Parallelism::Auto, |r| r.sum::<usize>(), |a, b| a + b);
        assert_eq!(total, Some((0..10_001).sum()));
        assert_eq!(chunked_reduce(0, 8, Parallelism::Auto, |r| r.len(), |a, b| a + b), None);
    }
}
