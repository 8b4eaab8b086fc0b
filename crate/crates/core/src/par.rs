//! Thin fan-out layer: rayon with the `parallel` feature (default), plain
//! iteration without it. Both paths produce identically ordered output, so
//! results never depend on thread count.

#[cfg(feature = "parallel")]
pub(crate) fn map_ordered<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_ordered<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Run `f` inside a pool of `jobs` threads (`jobs == 0` uses the global
/// pool). Sequential builds ignore `jobs`.
#[cfg(feature = "parallel")]
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("failed to build worker pool")
            .install(f)
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<T>(jobs: usize, f: impl FnOnce() -> T) -> T {
    let _ = jobs;
    f()
}
