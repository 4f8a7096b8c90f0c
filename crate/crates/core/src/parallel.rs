use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maps `f` over `0..n` on `jobs` worker threads, preserving index order in
/// the output. `jobs <= 1` runs on the calling thread.
pub fn run_parallel<T: Send, F>(jobs: usize, n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> T + Send + Sync,
{
    if jobs <= 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Validation(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}
