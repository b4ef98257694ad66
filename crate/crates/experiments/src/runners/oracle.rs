use std::time::Instant;

use mfgc_core::fbode_solver::{solve_mfg_particles_from, solve_nplayer_deterministic, TrajectoryBundle};
use mfgc_core::game_model::LqModel;
use mfgc_core::lq_oracle::{classify_degeneracy, solve_mfg_lq, solve_nplayer_lq, GameMode, GaussianInit, LqParams};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{grid, lq_coefficients, positions, solver_config, substream};
use crate::config::ExperimentConfig;
use crate::error::{Context, Result};
use crate::output::{plot_preamble, Check, Outcome, Table};
use crate::row;

#[derive(Debug, Clone)]
struct Instance {
    kappa: f64,
    rho: f64,
    gamma: f64,
    positions: Vec<f64>,
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    let mut rng = substream(cfg.seed, 0);
    if cfg.oracle.random_instances > 0 {
        let horizon = cfg.grid.horizon;
        let mut out = Vec::with_capacity(cfg.oracle.random_instances);
        while out.len() < cfg.oracle.random_instances {
            let n = rng.random_range(2..=cfg.oracle.max_players.max(2));
            let gamma = rng.random_range(0.2..2.0);
            let kappa = rng.random_range(-0.8..0.8) * (1.0 + gamma);
            let rho = rng.random_range(-0.8..0.8);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let params = LqParams::nplayer(kappa, rho, gamma, horizon, z.clone()).context(|| "instance".into())?;
            if classify_degeneracy(&params, GameMode::NPlayer).is_regular() {
                out.push(Instance {
                    kappa,
                    rho,
                    gamma,
                    positions: z,
                });
            }
        }
        return Ok(out);
    }
    let (kappa, rho, gamma) = lq_coefficients(&cfg.model)?;
    Ok(cfg
        .n_list
        .iter()
        .map(|&n| Instance {
            kappa,
            rho,
            gamma,
            positions: positions(&cfg.initial_law, n, &mut rng),
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Errors {
    state: f64,
    costate: f64,
    control: f64,
    iterations: usize,
    converged: bool,
    seconds: f64,
}

impl Errors {
    fn max(&self) -> f64 {
        self.state.max(self.costate).max(self.control)
    }
}

fn compare_nplayer(cfg: &ExperimentConfig, inst: &Instance, steps: usize, label: usize) -> Result<Errors> {
    let horizon = cfg.grid.horizon;
    let params = LqParams::nplayer(inst.kappa, inst.rho, inst.gamma, horizon, inst.positions.clone())
        .context(|| format!("instance {label}"))?;
    let g = grid(cfg, steps)?;
    let oracle = solve_nplayer_lq(&params, &g).context(|| format!("instance {label}: closed form"))?;
    let model = LqModel::new(inst.kappa, inst.rho, inst.gamma).context(|| "model".into())?;
    let start = Instant::now();
    let (bundle, report) = solve_nplayer_deterministic(&model, &inst.positions, &g, &solver_config(cfg, cfg.oracle.max_outer))
        .context(|| format!("instance {label}: Picard solver at M = {steps}"))?;
    let seconds = start.elapsed().as_secs_f64();
    let mut e = Errors {
        state: 0.0,
        costate: 0.0,
        control: 0.0,
        iterations: report.outer_iterations,
        converged: report.converged,
        seconds,
    };
    for i in 0..inst.positions.len() {
        for m in 0..g.len() {
            let x = oracle.state[i][m];
            let y = oracle.riccati[m] * x + oracle.costate[i][m];
            e.state = e.state.max((bundle.state(i, m) - x).abs());
            e.costate = e.costate.max((bundle.costate(i, m) - y).abs());
            e.control = e.control.max((bundle.control(i, m) - oracle.control(i, m)).abs());
        }
    }
    Ok(e)
}

/// Particle solution against the closed-form mean field, both started from
/// the same empirical mean.
fn compare_mean_field(cfg: &ExperimentConfig, inst: &Instance, steps: usize) -> Result<Errors> {
    let mut rng = substream(cfg.seed, 1);
    let particles = positions(&cfg.initial_law, cfg.oracle.mfg_particles, &mut rng);
    let n = particles.len() as f64;
    let mean = particles.iter().sum::<f64>() / n;
    let var = (particles.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).max(1e-12);
    let init = GaussianInit {
        mean,
        inv_width: 1.0 / (2.0 * var).sqrt(),
    };
    let params = LqParams::mean_field(inst.kappa, inst.rho, inst.gamma, cfg.grid.horizon, init)
        .context(|| "mean-field instance".into())?;
    let closed = solve_mfg_lq(&params).context(|| "mean-field closed form".into())?;
    let model = LqModel::new(inst.kappa, inst.rho, inst.gamma).context(|| "model".into())?;
    let g = grid(cfg, steps)?;
    let start = Instant::now();
    let (bundle, report): (TrajectoryBundle<f64>, _) =
        solve_mfg_particles_from(&model, &particles, &g, &solver_config(cfg, cfg.oracle.max_outer))
            .context(|| "mean-field particle solver".into())?;
    let seconds = start.elapsed().as_secs_f64();
    let mut e = Errors {
        state: 0.0,
        costate: 0.0,
        control: 0.0,
        iterations: report.outer_iterations,
        converged: report.converged,
        seconds,
    };
    let r0 = closed.riccati(0.0);
    for (i, &x0) in particles.iter().enumerate() {
        for (m, t) in g.nodes().enumerate() {
            // deviations from the mean decay like tau(t)/tau(0) = r(0)/r(t)
            let r = closed.riccati(t);
            let x = closed.mean(t) + (x0 - mean) * r0 / r;
            let y = r * x + closed.costate(t);
            let a = closed.gain(t) * x + closed.offset(t);
            e.state = e.state.max((bundle.state(i, m) - x).abs());
            e.costate = e.costate.max((bundle.costate(i, m) - y).abs());
            e.control = e.control.max((bundle.control(i, m) - a).abs());
        }
    }
    Ok(e)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let insts = instances(cfg)?;
    let steps = cfg.grid.steps;
    let half = (steps / 2).max(2);
    let results: Vec<Result<(Errors, Errors)>> = insts
        .par_iter()
        .enumerate()
        .map(|(k, inst)| Ok((compare_nplayer(cfg, inst, steps, k)?, compare_nplayer(cfg, inst, half, k)?)))
        .collect();
    let mut table = Table::new(&[
        "kind", "instance", "N", "kappa", "rho", "gamma", "steps", "err_state", "err_costate", "err_control",
        "err_max", "err_max_half", "ratio", "outer_iterations", "converged",
    ]);
    let tol = cfg.tolerances.oracle;
    let [lo, hi] = cfg.tolerances.order_ratio;
    let (mut worst, mut ratios, mut seconds, mut all_converged) = (0.0f64, Vec::new(), 0.0, true);
    for (k, (inst, res)) in insts.iter().zip(results).enumerate() {
        let (full, coarse) = res?;
        let ratio = coarse.max() / full.max();
        worst = worst.max(full.max());
        ratios.push(ratio);
        seconds += full.seconds;
        all_converged &= full.converged && coarse.converged;
        table.push(row![
            "n-player",
            k,
            inst.positions.len(),
            inst.kappa,
            inst.rho,
            inst.gamma,
            steps,
            full.state,
            full.costate,
            full.control,
            full.max(),
            coarse.max(),
            ratio,
            full.iterations,
            full.converged,
        ]);
    }
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(*r), b.max(*r)));
    let mut checks = vec![
        Check::new("oracle_error", worst <= tol, format!("max sup error {worst:e} (tolerance {tol:e})")),
        Check::new(
            "order_ratio",
            rmin >= lo && rmax <= hi,
            format!("error ratios under halving in [{rmin:.4}, {rmax:.4}], band [{lo}, {hi}]"),
        ),
        Check::new("converged", all_converged, "every Picard solve met its tolerance"),
    ];
    let mut summary = json!({
        "instances": insts.len(),
        "max_error": worst,
        "min_ratio": rmin,
        "max_ratio": rmax,
        "full_grid_solver_seconds": seconds,
    });
    if cfg.oracle.mfg_particles > 0 {
        let inst = &insts[0];
        let mf = compare_mean_field(cfg, inst, steps)?;
        table.push(row![
            "mean-field",
            0,
            cfg.oracle.mfg_particles,
            inst.kappa,
            inst.rho,
            inst.gamma,
            steps,
            mf.state,
            mf.costate,
            mf.control,
            mf.max(),
            "",
            "",
            mf.iterations,
            mf.converged,
        ]);
        checks.push(Check::new(
            "mean_field_error",
            mf.max() <= tol && mf.converged,
            format!("particle vs closed-form sup error {:e}", mf.max()),
        ));
        summary["mean_field_error"] = json!(mf.max());
    }
    let plot = plot_preamble("Picard solver against the closed form", "oracle.png")
        + "set logscale y\nset xlabel 'instance'\nset ylabel 'sup error'\n\
           plot 'table.csv' using 2:11 with points title 'M', '' using 2:12 with points title 'M/2'\n";
    Ok(Outcome {
        table,
        checks,
        summary,
        plot,
    })
}
