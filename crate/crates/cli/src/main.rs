mod args;
mod commands;
mod exit;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn init_pool(threads: Option<usize>) -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder
        .build_global()
        .map_err(|e| exit::Validation(format!("cannot start worker pool: {e}")).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    // only sweep and verify fan out; the rest run on one thread
    let threads = match cli.command {
        Command::Sweep(_) | Command::Verify(_) => cli.jobs,
        _ => Some(1),
    };
    if threads == Some(0) {
        return Err(exit::Validation("--jobs must be at least 1".into()).into());
    }
    init_pool(threads)?;
    match &cli.command {
        Command::Aggregate(a) => commands::aggregate(a, cli.quiet),
        Command::Synth(a) => commands::synth(a, cli.quiet),
        Command::Sweep(a) => commands::sweep(a, cli.quiet),
        Command::Verify(a) => commands::verify(a, cli.quiet),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::VALIDATION } else { exit::OK });
        }
    };
    exit::report(run(cli))
}
