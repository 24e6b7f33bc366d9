use std::process::ExitCode;

use clap::Parser;
use tcem_cli::commands::{configure_threads, run};
use tcem_cli::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads(cli.threads).and_then(|()| run(&cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = anyhow::Error::new(e);
            eprintln!("tcem: {err:#}");
            let code = err
                .downcast_ref::<tcem_cli::CliError>()
                .map_or(4, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
