mod cli;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;
use mirfs::ErrorKind;

use cli::{Cli, Command};
use io::ConfigError;

// 0 ok, 1 check failure, 2 usage or config, 3 model or domain, 4 numeric
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mirfs::Error>() {
            return match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Model => 3,
                ErrorKind::Numeric => 4,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate_cmd(args),
        Command::Eval(args) => commands::eval_cmd(args),
        Command::Fit(args) => commands::fit_cmd(args),
        Command::Check(args) => commands::check_cmd(args),
        Command::Diagnose(args) => commands::diagnose_cmd(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
