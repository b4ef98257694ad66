//! Configuration-driven experiments on top of `mfgc-core`.
//!
//! A run loads an [`ExperimentConfig`], dispatches to the matching runner and
//! writes `table.csv`, `report.json` and `plot.gp` under
//! `<out>/<experiment>/<config hash>/`.

pub mod config;
pub mod error;
pub mod output;
pub mod runners;

pub use config::{ExperimentConfig, ExperimentId};
pub use error::{ExperimentError, Result};
pub use output::{write_outputs, Check, Outcome, Table};

/// Validates `config` and runs it on a pool of `threads` workers (0 picks the
/// rayon default).
pub fn run(config: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::config(format!("thread pool: {e}")))?;
    pool.install(|| match config.experiment {
        ExperimentId::OracleCheck => runners::oracle::run(config),
        ExperimentId::NSweep => runners::nsweep::run(config),
        ExperimentId::DegeneracyMap => runners::degeneracy::run(config),
        ExperimentId::ViscositySweep => runners::viscosity::run(config),
        ExperimentId::DeviationVerify => runners::deviation::run(config),
        ExperimentId::StabilityProbe => runners::stability::run(config),
    })
}
