//! Data-parallel helpers. With the `parallel` feature, [`ExecMode::Parallel`] fans work out
//! over rayon; without it every mode runs sequentially. Results always come back in input
//! order, so output does not depend on the mode.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Like [`ExecMode::map`], stopping at the first error in input order.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }

    /// Runs `f` with at most `width` worker threads.
    pub fn with_width<R: Send>(self, width: usize, f: impl FnOnce() -> R + Send) -> R {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => match rayon::ThreadPoolBuilder::new()
                .num_threads(width.max(1))
                .build()
            {
                Ok(pool) => pool.install(f),
                Err(e) => {
                    log::warn!("thread pool unavailable ({e}); running on the global pool");
                    f()
                }
            },
            _ => {
                let _ = width;
                f()
            }
        }
    }
}
