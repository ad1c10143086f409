//! Data-parallel map over task indices.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] dispatches to rayon;
//! without it, both modes run sequentially. Output order always follows the
//! index order.


#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this mode will actually use worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

pub fn map_indexed<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// [`map_indexed`] for fallible tasks; the error of the lowest failing
/// index is returned.
pub fn try_map_indexed<T, E, F>(n: usize, mode: ExecMode, f: F) -> std::result::Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> std::result::Result<T, E> + Sync + Send,
{
    map_indexed(n, mode, f).into_iter().collect()
}
