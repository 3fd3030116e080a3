//! Worker pool sizing.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "HORIZON_THREADS";

/// Reads `HORIZON_THREADS`; `None` when unset or empty.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Sizes the global rayon pool. Only the first call in a process has an
/// effect; later calls report the size already in force.
pub fn init_pool(threads: Option<usize>) -> usize {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
