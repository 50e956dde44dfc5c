//! Minimal deterministic fork-join helper.
//!
//! Worker count is capped by the `DARE_THREADS` environment variable
//! (0 or unset = one worker per available core). Results are written to
//! index-addressed slots, so output order never depends on scheduling.

use std::env;

pub const THREADS_ENV: &str = "DARE_THREADS";

/// Effective worker count for parallel sections.
pub fn thread_limit() -> usize {
    let auto = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => auto,
            Ok(n) => n.min(auto.max(n)),
        },
        Err(_) => auto,
    }
}

/// Applies `f` to every index in `0..n`, possibly across threads, and
/// returns results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = thread_limit().max(1).min(n.max(1));
    if workers <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slot_chunk) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = w * chunk;
                for (i, slot) in slot_chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + i));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}
