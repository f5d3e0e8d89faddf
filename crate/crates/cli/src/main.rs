use clap::Parser;
use srmr_cli::{exit, run, thread_pool, threads_from_env, Cli};

fn main() {
    let cli = Cli::parse();
    let pool = thread_pool(threads_from_env());
    let code = match pool.install(|| run(&cli)) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    std::process::exit(code);
}
