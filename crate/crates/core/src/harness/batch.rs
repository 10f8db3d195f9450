//! Independent experiments of a batch, optionally spread over threads.

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, ExperimentResult, HarnessError};

/// Applies `f` to every item, on the rayon pool when the `parallel`
/// feature is enabled. Output order matches input order either way.
pub fn map_runs<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always single-threaded; the reference for `map_runs`.
pub fn map_runs_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

pub fn run_batch(cfgs: &[ExperimentConfig]) -> Vec<Result<ExperimentResult, HarnessError>> {
    map_runs(cfgs, run_experiment)
}

pub fn run_batch_sequential(
    cfgs: &[ExperimentConfig],
) -> Vec<Result<ExperimentResult, HarnessError>> {
    map_runs_sequential(cfgs, run_experiment)
}
