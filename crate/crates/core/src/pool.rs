//! Worker pool sizing. `PLANNER_THREADS` caps the number of threads used by
//! parallel solver stages; unset or invalid means rayon's default.

pub const THREADS_ENV: &str = "PLANNER_THREADS";

pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
}

/// Run `f` inside a pool honouring the thread cap.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    install_with(thread_cap(), f)
}

/// Run `f` in a pool of `threads` workers. Calls made from inside a worker
/// stay in the enclosing pool.
pub fn install_with<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    if rayon::current_thread_index().is_some() {
        return f();
    }
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
