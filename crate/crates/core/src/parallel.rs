//! Replicate fan-out.
//!
//! Replicate `i` always receives seed `mix64(master_seed, i)` and results come
//! back in index order, so the output does not depend on the thread count or
//! on whether the `parallel` feature is enabled.

use crate::seed::mix64;

/// Runs `count` replicates on the current thread.
pub fn replicate_sequential<T, F>(count: usize, master_seed: u64, job: F) -> Vec<T>
where
    F: Fn(usize, u64) -> T,
{
    (0..count)
        .map(|i| job(i, mix64(master_seed, i as u64)))
        .collect()
}

/// Runs `count` replicates on the rayon pool that is current for the caller.
#[cfg(feature = "parallel")]
pub fn replicate_parallel<T, F>(count: usize, master_seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| job(i, mix64(master_seed, i as u64)))
        .collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn replicate<T, F>(count: usize, master_seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        replicate_parallel(count, master_seed, job)
    }
    #[cfg(not(feature = "parallel"))]
    {
        replicate_sequential(count, master_seed, job)
    }
}

/// Runs `body` with at most `workers` threads available to [`replicate`].
pub fn with_workers<R, F>(workers: usize, body: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
        {
            Ok(pool) => pool.install(body),
            Err(_) => body(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        body()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_seeds_match_sequential() {
        let seq = replicate_sequential(257, 11, |i, s| (i, s));
        let any = with_workers(4, || replicate(257, 11, |i, s| (i, s)));
        assert_eq!(seq, any);
        assert_eq!(seq[5], (5, mix64(11, 5)));
    }
}
