use clap::Parser;
use savnce::cli::{failure_line, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", failure_line(&e));
        std::process::exit(1);
    }
}
