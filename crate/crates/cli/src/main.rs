use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochflow_cli::{run_scenario, CliError, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "stochflow", version, about = "Run stochastic flow scenarios from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Treat resolution and quadrature warnings as errors (exit 4).
        #[arg(long)]
        strict: bool,
        /// Worker threads; results do not depend on this.
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
        workers: Option<u32>,
        #[arg(long, value_name = "PATH")]
        output_dir: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            strict,
            workers,
            output_dir,
        } => ScenarioConfig::load(&config).and_then(|cfg| {
            let opts = RunOptions {
                strict,
                workers: workers.map(|n| n as usize),
                output_dir,
            };
            let summary = run_scenario(&cfg, &opts)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}",
                serde_json::json!({
                    "status": "ok",
                    "output_dir": summary.output_dir,
                    "artifacts": summary.files,
                    "warnings": summary.warnings.len(),
                })
            );
            Ok(())
        }),
        Command::Validate { config } => ScenarioConfig::load(&config).map(|cfg| {
            println!("{}", serde_json::json!({ "status": "valid", "mode": cfg.mode.name() }));
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}
