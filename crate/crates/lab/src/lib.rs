//! Experiment harness for `genil-core`: configuration, file formats, the
//! staged pipeline and the `genil` command line.

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;

pub use commands::Run;
pub use config::ExperimentConfig;

/// Worker threads from `GENIL_THREADS`, default 1.
pub fn thread_count() -> anyhow::Result<usize> {
    match std::env::var("GENIL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(config::ConfigError(format!("GENIL_THREADS must be a positive integer, got '{v}'")).into()),
        },
        Err(_) => Ok(1),
    }
}
