//! Sequential or data-parallel evaluation of independent work items.
//!
//! Results are always assembled in index order, so output never depends on scheduling.
//! Without the `parallel` feature, [`Execution::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `f(0), f(1), ..., f(n - 1)` in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }
}

/// Caps the global worker pool; `0` leaves the default (one worker per core).
///
/// Only the first call in a process has any effect.
pub fn configure_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if n == 0 {
            return false;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        let seq = Execution::Sequential.map_indexed(1000, f);
        let par = Execution::Parallel.map_indexed(1000, f);
        assert_eq!(seq, par);
        assert_eq!(seq[9], 9.0);
    }
}
