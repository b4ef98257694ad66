use mfgc_core::fbode_solver::{BundleMode, TrajectoryBundle};
use mfgc_core::lq_oracle::{solve_mfg_lq, solve_nplayer_lq, GaussianInit, LqMfgSolution, LqParams};
use mfgc_core::metrics::{
    empirical_convergence_error, evaluation_box, fournier_guillin_rate, initial_mismatch, ConvergenceError,
    LqGapInputs, RateRow, RateTable,
};
use mfgc_core::TimeGrid;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use serde_json::json;

use super::{grid, lq_coefficients, opt_cell, sample_law, substream};
use crate::config::{ExperimentConfig, InitialLawSpec};
use crate::error::{Context, Result};
use crate::output::{plot_preamble, Check, Outcome, Table};
use crate::row;

/// Quantiles `F⁻¹((k + ½)/n)` of the reference law.
fn quantiles(law: &InitialLawSpec, n: usize) -> Vec<f64> {
    match law {
        InitialLawSpec::Positions { values } => values.clone(),
        InitialLawSpec::Uniform { lo, hi } => (0..n).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64).collect(),
        InitialLawSpec::Gaussian { mean, std_dev } => (0..n)
            .map(|k| {
                let unit = Normal::standard();
                mean + std_dev * unit.inverse_cdf((k as f64 + 0.5) / n as f64)
            })
            .collect(),
    }
}

struct Replicate {
    error: ConvergenceError<f64>,
}

/// Mean-field copies `X̂_i(t) = μ(t) + (ξ_i − μ(0)) r(0)/r(t)` under the
/// closed-form feedback.
fn mean_field_bundle(mf: &LqMfgSolution<f64>, starts: &[f64], g: &TimeGrid<f64>) -> Result<TrajectoryBundle<f64>> {
    let r0 = mf.riccati(0.0);
    let mu0 = mf.mean(0.0);
    let mut states = Vec::with_capacity(starts.len());
    let mut costates = Vec::with_capacity(starts.len());
    let mut controls = Vec::with_capacity(starts.len());
    for &x0 in starts {
        let (mut xs, mut ys, mut a_s) = (Vec::new(), Vec::new(), Vec::new());
        for t in g.nodes() {
            let r = mf.riccati(t);
            let x = mf.mean(t) + (x0 - mu0) * r0 / r;
            xs.push(x);
            ys.push(r * x + mf.costate(t));
            a_s.push(mf.gain(t) * x + mf.offset(t));
        }
        states.push(xs);
        costates.push(ys);
        controls.push(a_s);
    }
    TrajectoryBundle::from_paths(BundleMode::MeanFieldParticles, *g, &states, &costates, &controls)
        .context(|| "mean-field bundle".into())
}

fn replicate(cfg: &ExperimentConfig, mf: &LqMfgSolution<f64>, n: usize, rep: usize, g: &TimeGrid<f64>) -> Result<Replicate> {
    let (kappa, rho, gamma) = lq_coefficients(&cfg.model)?;
    // one substream per (N, replicate), shared by both systems
    let mut rng = substream(cfg.seed, ((n as u64) << 20) | rep as u64);
    let xi: Vec<f64> = (0..n).map(|_| sample_law(&cfg.initial_law, &mut rng)).collect();
    let z: Vec<f64> = xi.iter().map(|x| x + cfg.sweep.shift).collect();
    let params = LqParams::nplayer(kappa, rho, gamma, cfg.grid.horizon, z).context(|| format!("N = {n}"))?;
    let sol = solve_nplayer_lq(&params, g).context(|| format!("N = {n}, replicate {rep}"))?;
    let states = sol.state.clone();
    let costates: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..g.len()).map(|m| sol.riccati[m] * sol.state[i][m] + sol.costate[i][m]).collect())
        .collect();
    let controls: Vec<Vec<f64>> = (0..n).map(|i| (0..g.len()).map(|m| sol.control(i, m)).collect()).collect();
    let nplayer = TrajectoryBundle::from_paths(BundleMode::NPlayer, *g, &states, &costates, &controls)
        .context(|| "N-player bundle".into())?;
    let copies = mean_field_bundle(mf, &xi, g)?;
    let gaps = LqGapInputs {
        nplayer: &sol,
        mean_field: mf,
        x_box: evaluation_box(&nplayer, cfg.sweep.box_factor),
    };
    let error = empirical_convergence_error(&nplayer, &copies, Some(&gaps)).context(|| "convergence error".into())?;
    Ok(Replicate { error })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (kappa, rho, gamma) = lq_coefficients(&cfg.model)?;
    let g = grid(cfg, cfg.grid.steps)?;
    let law = &cfg.initial_law;
    let init = GaussianInit {
        mean: law.mean(),
        inv_width: 1.0 / (2.0 * law.variance().max(1e-12)).sqrt(),
    };
    let mf_params = LqParams::mean_field(kappa, rho, gamma, cfg.grid.horizon, init).context(|| "mean-field params".into())?;
    let mf = solve_mfg_lq(&mf_params).context(|| "mean-field closed form".into())?;

    let reference = quantiles(law, cfg.sweep.reference_points);
    let shifted: Vec<f64> = reference.iter().map(|x| x + cfg.sweep.shift).collect();
    // every player has the same law, so K(N) is one W2² evaluation
    let mismatch = initial_mismatch(&reference, &[shifted]).context(|| "initial mismatch".into())?;

    let cells: Vec<(usize, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let results: Vec<Result<Replicate>> = cells.par_iter().map(|&(n, r)| replicate(cfg, &mf, n, r, &g)).collect();

    let mut rates = RateTable::new();
    let mut worst_slope_x = 0.0f64;
    let mut iter = results.into_iter();
    for &n in &cfg.n_list {
        let reps: Vec<Replicate> = iter.by_ref().take(cfg.replicates).collect::<Result<_>>()?;
        let k = reps.len() as f64;
        let mean = |f: &dyn Fn(&ConvergenceError<f64>) -> Option<f64>| -> Option<f64> {
            reps.iter().map(|r| f(&r.error)).sum::<Option<f64>>().map(|s| s / k)
        };
        for r in &reps {
            worst_slope_x = worst_slope_x.max(r.error.grad_gap_slope.unwrap_or(0.0));
        }
        let rate = fournier_guillin_rate(1, cfg.sweep.q, n).context(|| "rate".into())?;
        rates
            .push(RateRow {
                n,
                traj_error: mean(&|e| Some(e.traj_error)).unwrap_or(0.0),
                value_gap: mean(&|e| e.value_gap),
                grad_gap: mean(&|e| e.grad_gap),
                mismatch,
                rate,
                bound: cfg.sweep.bound_constant * (mismatch + rate),
            })
            .context(|| "rate table".into())?;
    }
    let slopes = rates.slopes();
    let mut table = Table::new(&["N", "traj_error", "value_gap", "grad_gap", "K_N", "r_dq_N", "bound"]);
    for r in rates.rows() {
        table.push(row![r.n, r.traj_error, opt_cell(r.value_gap), opt_cell(r.grad_gap), r.mismatch, r.rate, r.bound]);
    }
    let band = |name: &str, slope: Option<f64>, [lo, hi]: [f64; 2]| {
        let ok = slope.is_some_and(|s| s >= lo && s <= hi);
        Check::new(name, ok, format!("fitted slope {} against band [{lo}, {hi}]", opt_cell(slope)))
    };
    let t = &cfg.tolerances;
    let checks = vec![
        band("traj_slope", slopes.traj_error, t.traj_slope),
        band("value_slope", slopes.value_gap, t.value_slope),
        band("grad_slope", slopes.grad_gap, t.grad_slope),
        Check::new(
            "grad_gap_x_component",
            worst_slope_x <= t.grad_slope_x,
            format!("largest x-slope of the gradient gap {worst_slope_x:e}"),
        ),
    ];
    let summary = json!({
        "slopes": {
            "traj_error": slopes.traj_error,
            "value_gap": slopes.value_gap,
            "grad_gap": slopes.grad_gap,
            "K_N": slopes.mismatch,
            "r_dq_N": slopes.rate,
            "bound": slopes.bound,
        },
        "grad_gap_x_component": worst_slope_x,
        "mismatch": mismatch,
        "replicates": cfg.replicates,
        "fit": "least squares on log-log, smallest N discarded",
    });
    let plot = plot_preamble("Convergence to the mean-field limit", "nsweep.png")
        + "set logscale xy\nset xlabel 'N'\n\
           plot 'table.csv' using 1:2 with linespoints, '' using 1:3 with linespoints, \
           '' using 1:4 with linespoints, '' using 1:6 with lines\n";
    Ok(Outcome {
        table,
        checks,
        summary,
        plot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_quantiles_are_symmetric() {
        let q = quantiles(&InitialLawSpec::Gaussian { mean: 1.0, std_dev: 2.0 }, 4);
        assert!((q[0] + q[3] - 2.0).abs() < 1e-12);
        assert!((q[3] - 1.0 - 2.0 * 1.1503493803760079).abs() < 1e-9);
        let u = quantiles(&InitialLawSpec::Uniform { lo: 0.0, hi: 1.0 }, 2);
        assert_eq!(u, vec![0.25, 0.75]);
    }
}
