//! Batch execution helpers.
//!
//! `map_batch` fans independent per-item work across the rayon pool when the
//! `parallel` feature is enabled and falls back to a plain iterator otherwise.
//! Both paths return results in input order, so callers stay deterministic
//! regardless of thread scheduling. `map_batch_seq` is always sequential and
//! exists so benchmarks can compare the two schedules in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_batch<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_batch<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Sequential twin of [`map_batch`].
pub fn map_batch_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}
