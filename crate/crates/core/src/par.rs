//! Optional data parallelism over independent table entries.

use alloc::vec::Vec;

use crate::error::Result;

/// `(0..n).map(f)`, on the rayon pool when `parallel` is set and the
/// `parallel` feature is enabled. Errors surface in index order either way.
pub(crate) fn map<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        let out: Vec<Result<T>> = (0..n).into_par_iter().map(&f).collect();
        return out.into_iter().collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}
