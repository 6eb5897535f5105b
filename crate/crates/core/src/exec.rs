//! Execution strategy for the data-parallel loops in this crate.
//!
//! Every metric and the mixer are folds over records whose partial results
//! merge associatively, so the same code runs either on the rayon pool or on
//! the calling thread. Results are identical in both modes; only wall time
//! differs. Without the `parallel` feature, [`Exec::Parallel`] silently runs
//! sequentially.

use serde::{Deserialize, Serialize};

/// Records are pulled from streams in chunks of this size before being
/// fanned out, which bounds the memory a parallel fold holds at once.
pub const DEFAULT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `workers == 1` means sequential, anything else uses the pool.
    pub fn from_workers(workers: usize) -> Self {
        if workers <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map over a slice, preserving input order in the output.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Map every item to a partial value and merge the partials.
    ///
    /// `merge` must be associative and `identity` its neutral element; the
    /// result is then independent of how the work was split.
    pub fn map_reduce<T, A, I, M, R>(self, items: &[T], identity: I, map: M, merge: R) -> A
    where
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        M: Fn(&T) -> A + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(map).reduce(&identity, &merge);
        }
        items.iter().map(map).fold(identity(), merge)
    }

    /// Chunked fold over an arbitrary (possibly huge) iterator.
    pub fn fold_stream<T, A, It, I, M, R>(
        self,
        iter: It,
        chunk: usize,
        identity: I,
        map: M,
        merge: R,
    ) -> A
    where
        It: IntoIterator<Item = T>,
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        M: Fn(&T) -> A + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        let chunk = chunk.max(1);
        let mut acc = identity();
        let mut buf = Vec::with_capacity(chunk);
        let mut iter = iter.into_iter();
        loop {
            buf.clear();
            buf.extend(iter.by_ref().take(chunk));
            if buf.is_empty() {
                break;
            }
            let part = self.map_reduce(&buf, &identity, &map, &merge);
            acc = merge(acc, part);
        }
        acc
    }

    /// Run `f` inside a pool with exactly `workers` threads when parallel.
    pub fn install<R: Send>(self, workers: usize, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && workers > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(f);
            }
        }
        let _ = workers;
        f()
    }
}
