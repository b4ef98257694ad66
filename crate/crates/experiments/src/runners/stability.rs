use mfgc_core::fbode_solver::stability_probe;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::deviation::start_positions;
use super::{build_model, grid, solver_config, substream};
use crate::config::ExperimentConfig;
use crate::error::{Context, ExperimentError, Result};
use crate::output::{plot_preamble, Check, Outcome, Table};
use crate::row;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = build_model(&cfg.model)?;
    let z = start_positions(cfg);
    let n = z.len();
    let spec = &cfg.stability;
    let mut rng = substream(cfg.seed, 1);
    let mut directions = Vec::with_capacity(spec.trials.max(1));
    match &spec.direction {
        Some(d) if d.len() != n => {
            return Err(ExperimentError::config(format!("stability.direction needs {n} entries")));
        }
        Some(d) => directions.push(d.clone()),
        None => directions.push((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect()),
    }
    while directions.len() < spec.trials.max(1) {
        directions.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let g = grid(cfg, cfg.grid.steps)?;
    let solver = solver_config(cfg, 1000);
    let jobs: Vec<(usize, f64)> = (0..directions.len())
        .flat_map(|t| spec.epsilons.iter().map(move |&e| (t, e)))
        .collect();
    let ratios: Vec<(f64, bool)> = jobs
        .par_iter()
        .map(|&(t, eps)| {
            let moved: Vec<f64> = z.iter().zip(&directions[t]).map(|(a, d)| a + eps * d).collect();
            stability_probe(model.as_ref(), &z, &moved, &g, &solver)
                .map(|r| (r.ratio, r.identical_inits))
                .context(|| format!("stability probe, trial {t}, epsilon {eps}"))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&["trial", "epsilon", "ratio", "identical_inits"]);
    let mut worst_spread = 0.0f64;
    let mut largest = 0.0f64;
    for t in 0..directions.len() {
        let mut per_trial = Vec::new();
        for (&(tt, eps), &(ratio, same)) in jobs.iter().zip(&ratios) {
            if tt == t {
                table.push(row![t, eps, ratio, same]);
                per_trial.push(ratio);
                largest = largest.max(ratio);
            }
        }
        let (lo, hi) = per_trial.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        if lo > 0.0 {
            worst_spread = worst_spread.max(hi / lo - 1.0);
        }
    }
    let tol = &cfg.tolerances;
    let mut checks = vec![Check::new(
        "ratio_bounded",
        largest <= tol.stability_bound,
        format!("largest ratio {largest} against declared bound {}", tol.stability_bound),
    )];
    if cfg.model.name == "lq" {
        checks.push(Check::new(
            "ratio_constant",
            worst_spread <= tol.stability_spread,
            format!("largest relative spread across epsilons {worst_spread:e}"),
        ));
    }
    let summary = json!({
        "players": z,
        "model": model.name(),
        "largest_ratio": largest,
        "largest_spread": worst_spread,
    });
    let plot = plot_preamble("Stability of the Picard solution", "stability.png")
        + "set logscale x\nset xlabel 'epsilon'\nset ylabel 'ratio'\nplot 'table.csv' using 2:3 with points\n";
    Ok(Outcome {
        table,
        checks,
        summary,
        plot,
    })
}
