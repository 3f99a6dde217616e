use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rad_core::data::{generate_synthetic, write_csv};
use rad_core::harness::{
    apply_overrides, comparison_table, expand_matrix, load_flat, run_experiment, run_matrix,
    DatasetSource, ExperimentConfig, ExperimentOutcome,
};

#[derive(Parser)]
#[command(name = "rad", version, about = "Cleanse-then-classify continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration (all repetitions, plus paired baselines).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides of the form --key=value, e.g. --noise.mean=0.4
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run every combination of matrix.variants x matrix.noise_levels.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Write the synthetic dataset a config describes as CSV.
    GenSynthetic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_outcomes(outcomes: &[ExperimentOutcome]) {
    let rows: Vec<_> = outcomes.iter().map(ExperimentOutcome::row).collect();
    print!("{}", comparison_table(&rows));
}

fn run(cli: Cli) -> rad_core::Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let config = ExperimentConfig::from_file(&config, &overrides)?;
            let outcome = run_experiment(&config)?;
            for f in &outcome.failures {
                eprintln!("warning: {f}");
            }
            print_outcomes(std::slice::from_ref(&outcome));
        }
        Command::Matrix { config, overrides } => {
            let mut map = load_flat(&config)?;
            apply_overrides(&mut map, &overrides)?;
            let configs = expand_matrix(&map)?;
            let out = configs.first().and_then(|c| c.output_dir.clone());
            let (outcomes, errors) = run_matrix(&configs, out.as_deref());
            print_outcomes(&outcomes);
            if !errors.is_empty() {
                for e in &errors {
                    eprintln!("error: {e}");
                }
                return Err(rad_core::Error::Validation(format!(
                    "{} of {} configurations failed",
                    errors.len(),
                    configs.len()
                )));
            }
        }
        Command::GenSynthetic { config, out } => {
            let config = ExperimentConfig::from_file(&config, &[])?;
            let DatasetSource::Synthetic { separation } = config.source else {
                return Err(rad_core::Error::Config(
                    "gen-synthetic needs dataset.source = \"synthetic\"".into(),
                ));
            };
            let dataset = generate_synthetic(&config.stream, separation)?;
            write_csv(&dataset, &out)?;
            eprintln!("wrote {} instances to {}", dataset.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
