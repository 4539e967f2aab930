//! Order-preserving parallel map on the current rayon pool.

use rayon::prelude::*;

pub(crate) fn map<T, F>(range: std::ops::Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    range.into_par_iter().map(f).collect()
}
