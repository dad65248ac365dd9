//! Data-parallel execution over batches of independent work items.
//!
//! Every batch operation in the crate (window preparation, forward/backward
//! passes, evaluation) maps a pure function over a slice and collects the
//! results in input order. Reductions happen afterwards, sequentially, so the
//! result is bit-identical whichever mode runs the map.
//!
//! With the `parallel` feature (on by default) the map can run on the rayon
//! global pool; without it only the sequential path is compiled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch map is executed.
/// Defaults to `Parallel` when it is compiled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Like [`Exec::map`] but short-circuits on the first error (in input order
    /// for the sequential path; some error for the parallel path).
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }
}
