//! Execution policy for data-parallel loops.
//!
//! With the `parallel` feature (default) independent tasks run on rayon;
//! without it, or with [`Execution::Serial`], they run in a plain loop.
//! Results always come back in task order, so reductions over them are
//! identical either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Serial,
    /// `jobs = None` uses the global rayon pool.
    #[default]
    Parallel,
    Jobs(usize),
}

impl Execution {
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            None => Execution::Parallel,
            Some(0) | Some(1) => Execution::Serial,
            Some(j) => Execution::Jobs(j),
        }
    }
}

/// Evaluates `f(0), ..., f(n - 1)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Serial => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::Jobs(jobs) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
                Err(err) => {
                    log::warn!("could not build a {jobs}-thread pool ({err}); running serially");
                    (0..n).map(f).collect()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::Jobs(_) => (0..n).map(f).collect(),
    }
}
