mod args;
mod commands;
mod error;
mod output;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, cli),
        Command::Predictors(a) => commands::predictors(a, cli),
        Command::Synth(a) => commands::synth(a, cli),
        Command::Backtest(a) => commands::backtest(a, cli),
        Command::Rank(a) => commands::rank(a, cli),
        Command::Class(a) => commands::class(a, cli),
        Command::Forecast(a) => commands::forecast(a, cli),
        Command::Baserates(a) => commands::baserates(a, cli),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        if matches!(e, CliError::Closed) {
            return;
        }
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
