mod ablate;
mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use decomp_splat::Error;

use args::{Cli, Command};

/// Exit status for an error chain: 2 for bad configuration, 4 for numeric
/// failures, 3 for everything else (data, I/O, checkpoints).
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::InvalidConfig(_)) => 2,
        Some(
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } | Error::DegenerateQuaternion,
        ) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Render(a) => commands::render(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::AblateRatio(a) => ablate::ratio(&a),
        Command::AblateInit(a) => ablate::init(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
