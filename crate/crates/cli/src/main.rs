use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covforms::scenario::{self, EXIT_CONFIG};
use covforms::{load_config, Scenario};

#[derive(Parser)]
#[command(name = "covforms", version, about = "Covariant-form flows and structure checks on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gradient flow and write trace.csv, summary.json and state dumps.
    Run {
        config: PathBuf,
        /// Output directory (overrides `outputs`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Structure checks on the initial state, printed as JSON.
    Check { scenario: String, config: PathBuf },
    /// Power-iteration estimate of the gradient operator norm, printed as JSON.
    Spectrum { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => load_config(&config).and_then(|mut cfg| {
            if let Some(o) = out {
                cfg.outputs = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = scenario::run_scenario(&cfg)?;
            eprintln!(
                "{}: {} after {} steps; artifacts in {}",
                cfg.scenario,
                outcome.summary["termination"].as_str().unwrap_or("?"),
                outcome.summary["steps"],
                outcome.out_dir.display()
            );
            Ok(outcome.exit_code)
        }),
        Command::Check { scenario: name, config } => name
            .parse::<Scenario>()
            .and_then(|sc| load_config(&config)?.with_scenario(sc))
            .and_then(|cfg| {
                println!("{}", serde_json::to_string_pretty(&scenario::check(&cfg)?)?);
                Ok(0)
            }),
        Command::Spectrum { config } => load_config(&config).and_then(|cfg| {
            println!("{}", serde_json::to_string_pretty(&scenario::spectrum(&cfg)?)?);
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
