//! Execution policy for the data-parallel loops (random-start estimators,
//! sweeps, per-column assembly).
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it, or with [`Execution::Sequential`], everything runs on the
//! calling thread. Both paths produce identical results: every work item owns
//! its RNG stream and reductions are ordered by item index.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// The policy actually in force; `Parallel` degrades to sequential when
    /// the crate is built without the `parallel` feature.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec.effective() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Map `f` over a slice, collecting results in order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec.effective() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let seq = map_indexed(Execution::Sequential, 100, |i| (i * i) as f64);
        let par = map_indexed(Execution::Parallel, 100, |i| (i * i) as f64);
        assert_eq!(seq, par);
        let items: Vec<u32> = (0..37).collect();
        assert_eq!(
            map_slice(Execution::Sequential, &items, |x| x + 1),
            map_slice(Execution::Parallel, &items, |x| x + 1)
        );
    }
}
