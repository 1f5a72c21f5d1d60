//! Data-parallel execution of independent jobs.
//!
//! With the `parallel` feature (default) jobs are fanned out on rayon; without
//! it every strategy degrades to a plain sequential loop. Results always come
//! back in input order, so output never depends on the schedule.

/// How a batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Parallel on the global pool, or a dedicated pool of `jobs` threads.
    Parallel { jobs: Option<usize> },
    #[default]
    Auto,
}

impl Execution {
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Execution::Sequential,
            Some(j) => Execution::Parallel { jobs: Some(j) },
            None => Execution::Auto,
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Auto | Execution::Parallel { jobs: None } => {
                items.par_iter().map(f).collect()
            }
            Execution::Parallel { jobs: Some(j) } => {
                match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(e) => {
                        log::warn!("could not build a {j}-thread pool ({e}); running sequentially");
                        items.iter().map(f).collect()
                    }
                }
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = exec;
        items.iter().map(f).collect()
    }
}

/// `map` over the index range `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map(exec, &idx, |&i| f(i))
}
