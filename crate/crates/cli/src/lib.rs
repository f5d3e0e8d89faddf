//! Command-line front end: dataset simulation, fitting, evaluation,
//! benchmarking, significance testing and plot-data export.

pub mod commands;
pub mod error;
pub mod plot;
pub mod report;

pub use commands::{
    cmd_bench, cmd_eval, cmd_fit, cmd_plotdata, cmd_simulate, cmd_test_significance, run, Cli,
};
pub use error::{exit, CliError, CliResult};

/// Thread pool sized by `SRMR_THREADS` (all cores when unset or invalid).
pub fn thread_pool(threads: Option<usize>) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .expect("thread pool")
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var("SRMR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}
