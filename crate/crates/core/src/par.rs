//! Thin facade over the data-parallel runtime.
//!
//! Everything funnels through [`map_range`], which preserves index order, so
//! results are bitwise identical at any thread width. Reductions over the
//! returned vectors happen sequentially at the call sites; nothing in this
//! crate reduces floats inside the pool.

/// Runs `f` with a dedicated pool of `width` threads.
///
/// Width 0 means "runtime default". Without the `parallel` feature the
/// closure runs on the calling thread and `width` is ignored.
#[cfg(feature = "parallel")]
pub fn with_width<R: Send>(width: usize, f: impl FnOnce() -> R + Send) -> R {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if width > 0 {
        builder = builder.num_threads(width);
    }
    let pool = builder.build().expect("thread pool construction");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_width<R: Send>(_width: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_range<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Number of worker threads the current scope would use.
#[cfg(feature = "parallel")]
pub fn current_width() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
pub fn current_width() -> usize {
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(100, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
    }

    #[test]
    fn width_one_matches_default_width() {
        let a = with_width(1, || map_range(64, |i| (i as f64).sin()));
        let b = with_width(8, || map_range(64, |i| (i as f64).sin()));
        assert_eq!(a, b);
    }
}
