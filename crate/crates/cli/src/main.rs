use clap::Parser;
use gatebath_cli::Cli;

fn main() {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::process::exit(gatebath_cli::run(&cli));
}
