//! Opt-in data parallelism over the batch axis.
//!
//! Only loops whose iterations write disjoint outputs with no cross-iteration
//! reduction are parallelised, so results are bit-identical to serial mode.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Caps internal parallelism. `1` (the default) keeps everything serial.
pub fn set_threads(n: usize) {
    let n = n.max(1);
    THREADS.store(n, Ordering::Relaxed);
    if n > 1 {
        // the global pool can only be built once; later calls keep the first size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

pub(crate) fn enabled() -> bool {
    threads() > 1
}

/// Reads `MSDCA_THREADS` and applies it.
pub fn init_from_env() -> usize {
    let n = std::env::var("MSDCA_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(1);
    set_threads(n);
    threads()
}
