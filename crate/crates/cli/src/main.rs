use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zakai_cli::{load, run, validate};
use zakai_core::Execution;

#[derive(Parser)]
#[command(name = "zakai", version, about = "Run stable-noise SPDE and filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Disable data-parallel execution.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => {
            let diagnostics = validate(&config);
            if diagnostics.is_empty() {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            } else {
                for d in &diagnostics {
                    eprintln!("{d}");
                }
                ExitCode::from(1)
            }
        }
        Command::Run { config, sequential } => {
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let result = load(&config).and_then(|(text, plan)| run(&plan, &text, &config, exec));
            match result {
                Ok(summary) => {
                    for line in &summary.lines {
                        println!("{line}");
                    }
                    println!("artifacts written to {}", summary.directory.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
