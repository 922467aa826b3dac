//! Data-parallel execution helpers.
//!
//! With the `parallel` feature the helpers fan out over rayon's global pool;
//! without it, or when [`Execution::Sequential`] is requested, they run on the
//! calling thread. Results are always returned in index order and chunked
//! reductions merge partial results in chunk order, so numeric output does not
//! depend on the number of worker threads.

/// How ensemble loops are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential execution when the `parallel` feature is off.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Applies `f(i, &mut items[i])` to every item.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        }
        _ => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
    }
}

/// Folds indices `0..n` in fixed chunks of `chunk` items.
///
/// Each chunk starts from `init()`; chunk accumulators are merged into a fresh
/// `init()` strictly in chunk order.
pub fn fold_chunked<A, I, F, M>(exec: Execution, n: usize, chunk: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let parts = map_indexed(exec, n_chunks, |c| {
        let mut acc = init();
        for i in c * chunk..((c + 1) * chunk).min(n) {
            fold(&mut acc, i);
        }
        acc
    });
    let mut total = init();
    for part in parts {
        merge(&mut total, part);
    }
    total
}
