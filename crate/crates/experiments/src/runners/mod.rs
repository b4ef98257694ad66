//! One runner per experiment. Each returns an [`Outcome`](crate::output::Outcome)
//! and never touches the filesystem.

pub mod degeneracy;
pub mod deviation;
pub mod nsweep;
pub mod oracle;
pub mod stability;
pub mod viscosity;

use mfgc_core::fbode_solver::SolverConfig;
use mfgc_core::game_model::{CostModel, ModelParams, ModelRegistry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExperimentConfig, InitialLawSpec, ModelSpec};
use crate::error::{Context, ExperimentError, Result};

/// `(kappa, rho, gamma)` of the LQ model, with the registry defaults.
pub(crate) fn lq_coefficients(model: &ModelSpec) -> Result<(f64, f64, f64)> {
    Ok((model.require("kappa")?, model.param("rho", 0.0), model.param("gamma", 1.0)))
}


pub(crate) fn build_model(model: &ModelSpec) -> Result<Box<dyn CostModel<f64>>> {
    let params = model
        .params
        .iter()
        .fold(ModelParams::new(), |p, (k, v)| p.with(k, *v));
    ModelRegistry::<f64>::builtin()
        .build(&model.name, &params)
        .map_err(|e| ExperimentError::config(format!("model `{}`: {e}", model.name)))
}

/// Generator for substream `stream` of the experiment seed.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn sample_law(law: &InitialLawSpec, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        InitialLawSpec::Positions { values } => values[rng.random_range(0..values.len())],
        InitialLawSpec::Uniform { lo, hi } => rng.random_range(*lo..*hi),
        InitialLawSpec::Gaussian { mean, std_dev } => Normal::new(*mean, *std_dev).expect("validated").sample(rng),
    }
}

/// Explicit positions if configured with the right count, else `n` draws.
pub(crate) fn positions(law: &InitialLawSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match law {
        InitialLawSpec::Positions { values } if values.len() == n || n == 0 => values.clone(),
        _ => (0..n).map(|_| sample_law(law, rng)).collect(),
    }
}

pub(crate) fn solver_config(cfg: &ExperimentConfig, max_outer: usize) -> SolverConfig<f64> {
    SolverConfig {
        outer_tol: cfg.tolerances.picard,
        max_outer,
        ..SolverConfig::default()
    }
}

pub(crate) fn grid(cfg: &ExperimentConfig, steps: usize) -> Result<mfgc_core::TimeGrid<f64>> {
    mfgc_core::TimeGrid::new(cfg.grid.horizon, steps).context(|| "time grid".into())
}

/// Finite value or an empty cell.
pub(crate) fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
