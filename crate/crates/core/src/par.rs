//! Order-preserving parallel map. Results are always returned in index
//! order, so reductions are identical with and without the `parallel`
//! feature.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Applies `f` to every element in place and collects the results in
/// index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    F: Fn(usize, &mut T) -> R,
{
    items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Sizes the global worker pool. Call once, before any parallel work.
#[cfg(feature = "parallel")]
pub fn set_threads(n: usize) -> crate::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::Error::config("threads", e.to_string()))
}

#[cfg(not(feature = "parallel"))]
pub fn set_threads(_n: usize) -> crate::Result<()> {
    Ok(())
}
