use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use mfgc_experiments::{run, write_outputs, ExperimentConfig, ExperimentError, ExperimentId};

/// Run one experiment from a TOML or JSON config.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on a
/// numerical or i/o error, 3 on a configuration error.
#[derive(Debug, Parser)]
#[command(name = "mfgc", version)]
struct Cli {
    /// Experiment to run; must match `experiment` in the config.
    experiment: String,
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn execute(cli: &Cli) -> Result<bool, ExperimentError> {
    let id: ExperimentId = cli.experiment.parse()?;
    let mut config = ExperimentConfig::load(&cli.config)?;
    if config.experiment != id {
        return Err(ExperimentError::config(format!(
            "config is for `{}`, not `{id}`",
            config.experiment
        )));
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let root = config.output_dir.clone().unwrap_or_else(|| cli.out.clone());
    let start = Instant::now();
    let outcome = run(&config, cli.threads)?;
    let dir = write_outputs(&root, &config, &outcome, start.elapsed().as_secs_f64())?;
    for check in &outcome.checks {
        println!(
            "{} {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    println!("wrote {}", dir.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
