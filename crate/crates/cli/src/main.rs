use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QCRB_LOG", "warn")).init();
    let cli = qcrb_cli::Cli::parse();
    ExitCode::from(qcrb_cli::run(cli))
}
