use std::sync::Arc;

use mfgc_core::game_model::LqModel;
use mfgc_core::lq_oracle::{solve_nplayer_lq, LqParams};
use mfgc_core::stochastic_sim::{
    deviation_test, standard_families, AffineFeedback, DeviationReport, FeedbackSet, InitialLaw, SimConfig, Verdict,
};
use rayon::prelude::*;
use serde_json::json;

use super::{lq_coefficients, positions, substream};
use crate::config::ExperimentConfig;
use crate::error::{Context, Result};
use crate::output::{plot_preamble, Check, Outcome, Table};
use crate::row;

pub(crate) fn sim_config(cfg: &ExperimentConfig, beta: f64, n_paths: usize) -> SimConfig<f64> {
    SimConfig {
        beta,
        n_paths,
        dt: cfg.simulation.dt,
        seed: cfg.seed,
        antithetic: cfg.simulation.antithetic && n_paths % 2 == 0,
        ..SimConfig::default()
    }
}

/// Players' starting points: explicit positions, or `n_list[0]` (default 3)
/// draws from the initial law.
pub(crate) fn start_positions(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = cfg.n_list.first().copied().unwrap_or(3);
    positions(&cfg.initial_law, n, &mut substream(cfg.seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    Equilibrium,
    Corrupted,
}

impl Case {
    fn as_str(self) -> &'static str {
        match self {
            Case::Equilibrium => "equilibrium",
            Case::Corrupted => "corrupted",
        }
    }
}

/// Runs the standard families against the LQ equilibrium at `beta`, or
/// against the equilibrium with `player`'s offset shifted.
pub(crate) fn verify(
    cfg: &ExperimentConfig,
    z: &[f64],
    beta: f64,
    player: usize,
    shift: Option<f64>,
    n_paths: usize,
) -> Result<DeviationReport<f64>> {
    let (kappa, rho, gamma) = lq_coefficients(&cfg.model)?;
    let horizon = cfg.grid.horizon;
    let sim = sim_config(cfg, beta, n_paths);
    let g = sim.grid(horizon).context(|| "simulation grid".into())?;
    let params = LqParams::nplayer(kappa, rho, gamma, horizon, z.to_vec())
        .and_then(|p| p.with_beta(beta))
        .context(|| "deviation params".into())?;
    let sol = solve_nplayer_lq(&params, &g).context(|| format!("closed form at beta = {beta}"))?;
    let mut fb = FeedbackSet::from_lq(&sol);
    if let Some(s) = shift {
        let offset = sol.offset[player].iter().map(|c| c + s).collect();
        let bad = AffineFeedback::new(sol.grid, sol.gain.clone(), offset).context(|| "corrupted feedback".into())?;
        fb = fb.with(player, Arc::new(bad));
    }
    let init: Vec<InitialLaw<f64>> = z.iter().map(|&v| InitialLaw::Dirac(v)).collect();
    let model = LqModel::from_params(&params);
    deviation_test(
        &fb,
        &init,
        &model,
        player,
        &standard_families(horizon),
        &cfg.simulation.epsilons,
        horizon,
        &sim,
    )
    .context(|| format!("deviation test at beta = {beta}, player {player}"))
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let z = start_positions(cfg);
    if let Some(&p) = cfg.simulation.players.iter().find(|&&p| p >= z.len()) {
        return Err(crate::error::ExperimentError::config(format!("player {p} out of {}", z.len())));
    }
    let jobs: Vec<(f64, usize, Case)> = cfg
        .simulation
        .betas
        .iter()
        .flat_map(|&b| {
            cfg.simulation
                .players
                .iter()
                .flat_map(move |&p| [(b, p, Case::Equilibrium), (b, p, Case::Corrupted)])
        })
        .collect();
    let reports: Vec<DeviationReport<f64>> = jobs
        .par_iter()
        .map(|&(beta, player, case)| {
            let shift = (case == Case::Corrupted).then_some(cfg.simulation.corrupt_shift);
            verify(cfg, &z, beta, player, shift, cfg.simulation.n_paths)
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "beta", "case", "player", "family", "epsilon", "dJ_mean", "dJ_stderr", "verdict",
    ]);
    let mut curvature = Vec::new();
    let (mut eq_ok, mut bad_refuted, mut inconclusive) = (true, true, 0usize);
    for (&(beta, player, case), rep) in jobs.iter().zip(&reports) {
        for o in &rep.outcomes {
            table.push(row![
                beta,
                case.as_str(),
                player,
                o.family,
                o.epsilon,
                o.delta.mean,
                o.delta.std_error,
                o.verdict,
            ]);
        }
        match case {
            Case::Equilibrium => {
                eq_ok &= rep.passes();
                inconclusive += rep.outcomes.iter().filter(|o| o.verdict == Verdict::Inconclusive).count();
                curvature.push(json!({
                    "beta": beta,
                    "player": player,
                    "baseline_cost": rep.baseline.mean,
                    "curvature": rep.curvature.iter().map(|(f, c)| json!({"family": f, "c": c})).collect::<Vec<_>>(),
                }));
            }
            Case::Corrupted => bad_refuted &= rep.verdict == Verdict::Fail,
        }
    }
    let families = standard_families(cfg.grid.horizon).len();
    let checks = vec![
        Check::new(
            "equilibrium_passes",
            eq_ok,
            format!("{families} families, betas {:?}, dJ >= -3 stderr everywhere", cfg.simulation.betas),
        ),
        Check::new(
            "corrupted_refuted",
            bad_refuted,
            format!("offset shifted by {} is refuted at every beta", cfg.simulation.corrupt_shift),
        ),
    ];
    let summary = json!({
        "players": z,
        "families": families,
        "inconclusive_outcomes": inconclusive,
        "curvature_fits": curvature,
    });
    let plot = plot_preamble("Unilateral deviations", "deviation.png")
        + "set xlabel 'epsilon'\nset ylabel 'dJ'\n\
           plot 'table.csv' using 5:(strcol(2) eq 'equilibrium' ? $6 : 1/0):7 with yerrorbars title 'equilibrium', \
           '' using 5:(strcol(2) eq 'corrupted' ? $6 : 1/0):7 with yerrorbars title 'corrupted'\n";
    Ok(Outcome {
        table,
        checks,
        summary,
        plot,
    })
}
