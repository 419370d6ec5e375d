use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cutofflab::{experiment_listing, load_config, run_experiment, validate_config, CliError};

#[derive(Parser)]
#[command(name = "cutofflab", version, about = "Spectral cut-off propagator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config describes; exits 0 iff every declared criterion passes.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "CUTOFFLAB_WORKERS")]
        workers: Option<usize>,
    },
    /// Print the experiment registry.
    ListExperiments,
    /// Check a config without running it and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CRITERIA_FAILED: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::ListExperiments => {
            print!("{}", experiment_listing());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let (config, _) = load_config(&config)?;
            let violations = validate_config(&config);
            if violations.is_empty() {
                println!("valid");
                return Ok(ExitCode::SUCCESS);
            }
            for v in &violations {
                println!("{v}");
            }
            Ok(ExitCode::from(EXIT_CRITERIA_FAILED))
        }
        Command::Run { config: path, out, workers } => {
            let (config, hash) = load_config(&path)?;
            let out_dir = out
                .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(config.experiment.name()));
            let report = run_experiment(&config, hash, &out_dir, workers)?;
            for c in &report.summary.criteria {
                let observed = c.observed.map_or("missing".to_string(), |v| format!("{v:.6e}"));
                println!("{} {}: {observed} (want {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.requirement);
            }
            println!(
                "{} {} in {:.2}s → {}",
                report.summary.experiment,
                if report.summary.pass { "passed" } else { "failed" },
                report.summary.wall_clock_seconds,
                report.out_dir.display()
            );
            Ok(if report.summary.pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CRITERIA_FAILED) })
        }
    }
}
