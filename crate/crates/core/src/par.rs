//! Parallel-or-sequential iteration helpers.
//!
//! All reductions in this crate go through `map_vec`/`map_range`: the mapped
//! results are collected in input order and folded sequentially, so the
//! numerical output is identical with and without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_vec<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Max of a mapped slice, folded in input order.
pub fn max_map<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    map_vec(items, f).into_iter().fold(f64::NEG_INFINITY, f64::max)
}
