//! Index-ordered map over independent work items.
//!
//! With the `parallel` feature the work runs on a rayon pool; without it, or
//! with [`Execution::Sequential`], it runs in a plain loop. Results come back
//! in input order either way, so outputs do not depend on the schedule.

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Use the global rayon pool, or a dedicated one with this many threads.
    #[default]
    Parallel,
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Execution::Parallel,
            Some(0) | Some(1) => Execution::Sequential,
            Some(n) => Execution::Workers(n),
        }
    }
}

/// Apply `f` to `0..n` and collect the results in index order. The first
/// error by index is returned.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => parallel(n, &f),
        #[cfg(feature = "parallel")]
        Execution::Workers(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| parallel(n, &f)),
            Err(_) => parallel(n, &f),
        },
        #[cfg(not(feature = "parallel"))]
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(feature = "parallel")]
fn parallel<T, F>(n: usize, f: &F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        for exec in [Execution::Sequential, Execution::Parallel, Execution::Workers(3)] {
            let out = map_indexed(exec, 100, |i| Ok(i * i)).unwrap();
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_by_index_wins() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let err = map_indexed(exec, 50, |i| {
                if i % 7 == 3 {
                    Err(Error::Internal(format!("{i}")))
                } else {
                    Ok(i)
                }
            })
            .unwrap_err();
            assert_eq!(err.to_string(), "internal consistency violated: 3");
        }
    }
}
