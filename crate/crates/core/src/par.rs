//! Thin switch between sequential and rayon-backed loops.
//!
//! Only element-wise maps go through here; every reduction stays sequential in
//! a fixed order so the thread count never changes a result.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn map_collect<T: Send, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
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
