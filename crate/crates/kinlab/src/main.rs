use clap::Parser;

fn main() -> std::process::ExitCode {
    env_logger::init();
    let cli = kinlab::cli::Cli::parse();
    std::process::ExitCode::from(kinlab::cli::run(cli) as u8)
}
