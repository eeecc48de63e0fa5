//! Execution strategy for the batch computations (cell sweeps, profiling
//! grids, Monte Carlo sampling).
//!
//! Every batch routine takes an [`Exec`] and produces identical results under
//! both strategies: work items are indexed, results are gathered in index
//! order, and reductions are associative over integers.

/// How a batch of independent work items is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses the rayon global pool when the `parallel` feature is enabled,
    /// otherwise degrades to [`Exec::Sequential`].
    #[default]
    Parallel,
}

impl Exec {
    /// Whether parallel evaluation is actually available in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Map then fold with an associative, commutative merge.
    pub fn map_reduce<T, F, R>(self, n: usize, identity: T, f: F, merge: R) -> T
    where
        T: Send + Clone + Sync,
        F: Fn(usize) -> T + Sync + Send,
        R: Fn(T, T) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n)
                .into_par_iter()
                .map(f)
                .reduce(|| identity.clone(), &merge);
        }
        (0..n).map(f).fold(identity, merge)
    }
}
