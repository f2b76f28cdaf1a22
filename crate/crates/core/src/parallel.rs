//! Worker-pool sizing. Every parallel stage writes into index-addressed slots,
//! so results do not depend on the number of workers.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "VISTALOOP_THREADS";

/// Worker count requested through the environment; `None` for automatic.
pub fn requested_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::semantic(THREADS_ENV, format!("{s:?} is not a worker count")))?;
            Ok((n > 0).then_some(n))
        }
    }
}

/// Run `f` inside a pool sized by the environment.
pub fn with_configured_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = requested_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
