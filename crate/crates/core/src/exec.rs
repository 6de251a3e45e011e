//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) the map helpers run on rayon;
//! without it they are plain iterator loops. Output order always matches
//! input order and every task derives its own RNG stream, so both modes
//! produce bit-identical results. [`sequential`] forces the fallback at
//! runtime within a scope, which is what the benchmarks and the
//! determinism tests use to compare the two paths.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

struct SeqGuard {
    prev: bool,
}

impl Drop for SeqGuard {
    fn drop(&mut self) {
        FORCE_SEQUENTIAL.with(|c| c.set(self.prev));
    }
}

/// Run `f` with all exec maps forced onto the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let _guard = SeqGuard {
        prev: FORCE_SEQUENTIAL.with(|c| c.replace(true)),
    };
    f()
}

fn forced_sequential() -> bool {
    FORCE_SEQUENTIAL.with(Cell::get)
}

/// Map `f` over `0..count`, preserving index order in the output.
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !forced_sequential() {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = forced_sequential();
    (0..count).map(f).collect()
}

/// Map `f` over a slice, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !forced_sequential() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = forced_sequential();
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Cap the global worker count. Call once at startup, before any parallel
/// work; later calls are ignored. No-op without the `parallel` feature.
pub fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
