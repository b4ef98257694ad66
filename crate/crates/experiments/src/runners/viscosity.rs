use mfgc_core::game_model::LqModel;
use mfgc_core::lq_oracle::{solve_nplayer_lq, LqParams};
use mfgc_core::stochastic_sim::{estimate_costs, FeedbackSet, InitialLaw, Verdict};
use rayon::prelude::*;
use serde_json::json;

use super::deviation::{sim_config, start_positions, verify};
use super::lq_coefficients;
use crate::config::ExperimentConfig;
use crate::error::{Context, Result};
use crate::output::{plot_preamble, Check, Outcome, Table};
use crate::row;

struct Level {
    beta: f64,
    gains_identical: bool,
    grad_gap: f64,
    value_offsets: Vec<f64>,
    values: Vec<f64>,
    costs: Vec<(f64, f64)>,
    verdict: Verdict,
}

/// Least-squares line `y = c₀ + c₁ x` and its R².
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (kappa, rho, gamma) = lq_coefficients(&cfg.model)?;
    let horizon = cfg.grid.horizon;
    let z = start_positions(cfg);
    let sim0 = sim_config(cfg, 0.0, cfg.simulation.n_paths);
    let g = sim0.grid(horizon).context(|| "simulation grid".into())?;
    let base = LqParams::nplayer(kappa, rho, gamma, horizon, z.clone()).context(|| "params".into())?;
    let reference = solve_nplayer_lq(&base, &g).context(|| "closed form at beta = 0".into())?;
    let model = LqModel::from_params(&base);
    let init: Vec<InitialLaw<f64>> = z.iter().map(|&v| InitialLaw::Dirac(v)).collect();

    let levels: Vec<Level> = cfg
        .simulation
        .betas
        .par_iter()
        .map(|&beta| -> Result<Level> {
            let params = base.clone().with_beta(beta).context(|| "beta".into())?;
            let sol = solve_nplayer_lq(&params, &g).context(|| format!("closed form at beta = {beta}"))?;
            let gains_identical = sol.gain == reference.gain && sol.offset == reference.offset;
            let grad_gap = sol
                .costate
                .iter()
                .flatten()
                .zip(reference.costate.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let value_offsets = (0..z.len()).map(|i| sol.constant[i][0] - reference.constant[i][0]).collect();
            let values = (0..z.len())
                .map(|i| 0.5 * sol.riccati[0] * z[i] * z[i] + sol.costate[i][0] * z[i] + sol.constant[i][0])
                .collect();
            let fb = FeedbackSet::from_lq(&sol);
            let costs = estimate_costs(&fb, &init, &model, horizon, &sim_config(cfg, beta, cfg.simulation.n_paths))
                .context(|| format!("Monte Carlo costs at beta = {beta}"))?
                .iter()
                .map(|c| (c.mean, c.std_error))
                .collect();
            let player = cfg.simulation.players.first().copied().unwrap_or(0);
            let verdict = verify(cfg, &z, beta, player, None, cfg.simulation.deviation_paths)?.verdict;
            Ok(Level {
                beta,
                gains_identical,
                grad_gap,
                value_offsets,
                values,
                costs,
                verdict,
            })
        })
        .collect::<Result<_>>()?;

    let a = 1.0 + gamma;
    let riccati_integral = a * ((horizon + a) / a).ln();
    let mut table = Table::new(&[
        "beta", "player", "value_offset", "beta_riccati_integral", "mc_cost", "mc_stderr", "value", "cost_offset",
        "gains_identical", "grad_gap", "deviation_verdict",
    ]);
    let (mut mc_ok, mut worst_mc) = (true, 0.0f64);
    for l in &levels {
        for i in 0..z.len() {
            let (j, se) = l.costs[i];
            let w0 = 0.5 * reference.riccati[0] * z[i] * z[i] + reference.costate[i][0] * z[i] + reference.constant[i][0];
            let gap = (j - l.values[i]).abs();
            worst_mc = worst_mc.max(gap);
            mc_ok &= gap <= 4.0 * se + 1e-3;
            table.push(row![
                l.beta,
                i,
                l.value_offsets[i],
                l.beta * riccati_integral,
                j,
                se,
                l.values[i],
                j - w0,
                l.gains_identical,
                l.grad_gap,
                l.verdict,
            ]);
        }
    }
    let betas: Vec<f64> = levels.iter().map(|l| l.beta).collect();
    let offsets: Vec<f64> = levels
        .iter()
        .map(|l| l.value_offsets.iter().sum::<f64>() / z.len() as f64)
        .collect();
    let (slope, r2) = if betas.len() >= 2 { linear_fit(&betas, &offsets) } else { (f64::NAN, f64::NAN) };
    let zero_row_ok = levels
        .iter()
        .filter(|l| l.beta == 0.0)
        .all(|l| l.value_offsets.iter().all(|v| *v == 0.0));
    let checks = vec![
        Check::new(
            "gains_beta_invariant",
            levels.iter().all(|l| l.gains_identical && l.grad_gap == 0.0),
            "gain, offset and costate curves bitwise equal to the beta = 0 ones",
        ),
        Check::new("zero_beta_offset", zero_row_ok, "beta = 0 value offsets are exactly 0"),
        Check::new(
            "offset_linear_in_beta",
            r2 >= cfg.tolerances.r_squared,
            format!("slope {slope}, R^2 {r2} (Riccati integral {riccati_integral})"),
        ),
        Check::new(
            "monte_carlo_matches_value",
            mc_ok,
            format!("largest |J - w(0, z)| = {worst_mc:e}"),
        ),
        Check::new(
            "deviation_passes",
            levels.iter().all(|l| l.verdict != Verdict::Fail),
            "deviation test at every beta",
        ),
    ];
    let summary = json!({
        "players": z,
        "offset_slope": slope,
        "offset_r_squared": r2,
        "riccati_integral": riccati_integral,
        "max_mc_gap": worst_mc,
    });
    let plot = plot_preamble("Vanishing viscosity", "viscosity.png")
        + "set xlabel 'beta'\nset ylabel 'offset'\n\
           plot 'table.csv' using 1:3 with points title 'value offset', '' using 1:4 with lines title 'beta int r', \
           '' using 1:8:6 with yerrorbars title 'Monte Carlo'\n";
    Ok(Outcome {
        table,
        checks,
        summary,
        plot,
    })
}
