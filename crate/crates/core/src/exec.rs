//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the parallel paths run on rayon;
//! without it every call degrades to an ordinary loop. Outputs are always
//! collected in index order, so results never depend on the schedule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Apply `f(row_index, row)` to consecutive `width`-sized rows of `data`.
pub fn for_each_row_mut<T, F>(data: &mut [T], width: usize, exec: Execution, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = exec;
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Sum of `f(i)` over `0..n`, reduced in fixed-size blocks so the rounding
/// pattern does not depend on the thread count.
pub fn sum_indexed<F>(n: usize, exec: Execution, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    const BLOCK: usize = 64;
    let blocks = n.div_ceil(BLOCK);
    let partial = map_indexed(blocks, exec, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.iter().sum()
}

/// Run `f` with the global parallelism capped at `workers` threads.
/// `None` uses the default pool.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
        {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("could not build a {w}-thread pool ({e}); using the default"),
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let seq = map_indexed(1000, Execution::Sequential, |i| i * i);
        let par = map_indexed(1000, Execution::Parallel, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn sum_is_schedule_independent() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = sum_indexed(10_000, Execution::Sequential, f);
        let b = sum_indexed(10_000, Execution::Parallel, f);
        let c = with_workers(Some(3), || sum_indexed(10_000, Execution::Parallel, f));
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn rows_visited_once() {
        let mut v = vec![0usize; 12];
        for_each_row_mut(&mut v, 4, Execution::Parallel, |i, row| {
            row.iter_mut().for_each(|x| *x = i)
        });
        assert_eq!(v, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }
}
