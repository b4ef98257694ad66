use mfgc_core::fbode_solver::solve_mfg_particles_from;
use mfgc_core::game_model::LqModel;
use mfgc_core::lq_oracle::{
    classify_degeneracy, semimon_constants, solve_mfg_lq, Degeneracy, GameMode, GaussianInit, LqParams,
};
use mfgc_core::Error;
use rayon::prelude::*;
use serde_json::json;

use super::{grid, solver_config};
use crate::config::ExperimentConfig;
use crate::error::{Context, Result};
use crate::output::{plot_preamble, Check, Outcome, Table};
use crate::row;

fn axis([lo, hi]: [f64; 2], count: usize, k: usize) -> f64 {
    if k + 1 == count {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (count - 1) as f64
    }
}

#[derive(Debug, Clone)]
struct Cell {
    kappa: f64,
    rho: f64,
    class: Degeneracy,
    determinant: f64,
    label: &'static str,
    contraction: f64,
    semimonotone: bool,
    condition: f64,
    closed_form: &'static str,
    picard: String,
    picard_iterations: usize,
}

fn picard_label(e: &Error) -> &'static str {
    match e {
        Error::NonContraction { .. } => "non-contraction",
        Error::Divergence { .. } => "divergence",
        Error::MaxIterations { .. } => "max-iterations",
        Error::Coercivity { .. } => "coercivity",
        Error::NonConvergence { .. } => "newton-failure",
        _ => "error",
    }
}

fn label(class: Degeneracy) -> &'static str {
    match class {
        Degeneracy::Regular => "regular",
        Degeneracy::NoQuadraticSolution => "no-quadratic-solution",
        Degeneracy::NonUniqueFamily => "non-unique-family",
        Degeneracy::InconsistentSystem => "inconsistent-system",
    }
}

fn evaluate(cfg: &ExperimentConfig, kappa: f64, rho: f64, particles: &[f64]) -> Result<Cell> {
    let gamma = cfg.model.param("gamma", 0.5);
    let spec = &cfg.degeneracy;
    let init = GaussianInit {
        mean: spec.mean,
        inv_width: 1.0,
    };
    let params = LqParams::mean_field(kappa, rho, gamma, cfg.grid.horizon, init).context(|| "cell".into())?;
    let report = classify_degeneracy(&params, GameMode::MeanField);
    let semimon = semimon_constants(&params, GameMode::MeanField);
    let contraction = kappa.abs() / (1.0 + gamma);
    let closed_form = if report.is_regular() {
        match solve_mfg_lq(&params) {
            Ok(_) => "solved",
            Err(_) => "failed",
        }
    } else {
        "skipped"
    };
    let model = LqModel::new(kappa, rho, gamma).context(|| "model".into())?;
    let g = grid(cfg, spec.attempt_steps.max(2))?;
    let (picard, picard_iterations) = match solve_mfg_particles_from(&model, particles, &g, &solver_config(cfg, spec.max_outer)) {
        Ok((_, rep)) if rep.converged => ("converged".to_string(), rep.outer_iterations),
        Ok((_, rep)) => ("not-converged".to_string(), rep.outer_iterations),
        Err(e) => (picard_label(&e).to_string(), 0),
    };
    let label = if !report.is_regular() {
        label(report.classification)
    } else if contraction >= 1.0 {
        "contraction-fail"
    } else if !semimon.semimonotone {
        "semimonotone-fail"
    } else {
        "regular"
    };
    Ok(Cell {
        kappa,
        rho,
        class: report.classification,
        determinant: report.determinant,
        label,
        contraction,
        semimonotone: semimon.semimonotone,
        condition: semimon.condition_value,
        closed_form,
        picard,
        picard_iterations,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = &cfg.degeneracy;
    let gamma = cfg.model.param("gamma", 0.5);
    let a = 1.0 + gamma;
    let horizon = cfg.grid.horizon;
    // fixed symmetric particle cloud around the configured mean
    let particles: Vec<f64> = (0..spec.particles.max(1))
        .map(|k| spec.mean + (k as f64 + 0.5) / spec.particles.max(1) as f64 - 0.5)
        .collect();
    let coords: Vec<(usize, usize)> = (0..spec.kappa_count)
        .flat_map(|i| (0..spec.rho_count).map(move |j| (i, j)))
        .collect();
    let cells: Vec<Cell> = coords
        .par_iter()
        .map(|&(i, j)| {
            evaluate(
                cfg,
                axis(spec.kappa, spec.kappa_count, i),
                axis(spec.rho, spec.rho_count, j),
                &particles,
            )
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "kappa", "rho", "classification", "label", "determinant", "contraction", "semimonotone", "condition",
        "closed_form", "picard", "picard_iterations",
    ]);
    for c in &cells {
        table.push(row![
            c.kappa,
            c.rho,
            label(c.class),
            c.label,
            c.determinant,
            c.contraction,
            c.semimonotone,
            c.condition,
            c.closed_form,
            c.picard,
            c.picard_iterations,
        ]);
    }

    let scale = 1.0 + a.abs() + horizon;
    let on_kappa_line = |c: &Cell| (c.kappa + a).abs() <= 1e-9 * scale;
    let on_family_line = |c: &Cell| (a + c.kappa + horizon * (1.0 + c.rho)).abs() <= 1e-9 * scale;
    let zero_mean = spec.mean == 0.0;
    let family: Vec<&Cell> = cells.iter().filter(|c| on_family_line(c) && !on_kappa_line(c)).collect();
    let family_ok = zero_mean && family.iter().all(|c| c.class == Degeneracy::NonUniqueFamily);
    let kappa_line: Vec<&Cell> = cells.iter().filter(|c| on_kappa_line(c)).collect();
    let kappa_ok = kappa_line.iter().all(|c| c.class == Degeneracy::NoQuadraticSolution);
    let regular: Vec<&Cell> = cells.iter().filter(|c| c.class == Degeneracy::Regular).collect();
    let solved_ok = regular.iter().all(|c| c.closed_form == "solved");
    let in_regime: Vec<&Cell> = regular
        .iter()
        .copied()
        .filter(|c| c.contraction < 1.0 && c.condition > 0.0)
        .collect();
    let in_regime_converged = in_regime.iter().filter(|c| c.picard == "converged").count();
    let line_noncontractive = kappa_line.iter().filter(|c| c.picard == "non-contraction").count();

    let checks = vec![
        Check::new(
            "non_unique_family_line",
            family_ok && !family.is_empty(),
            format!(
                "{} cells on 1+kappa+gamma+T(1+rho)=0 off the kappa line, mean {}",
                family.len(),
                spec.mean
            ),
        ),
        Check::new(
            "no_quadratic_solution_line",
            kappa_ok && !kappa_line.is_empty(),
            format!("{} cells on kappa = -(1+gamma)", kappa_line.len()),
        ),
        Check::new(
            "regular_cells_solve",
            solved_ok,
            format!("{} regular cells, closed form solved on all: {solved_ok}", regular.len()),
        ),
    ];
    let count = |l: &str| cells.iter().filter(|c| c.label == l).count();
    let summary = json!({
        "cells": cells.len(),
        "labels": {
            "regular": count("regular"),
            "contraction-fail": count("contraction-fail"),
            "semimonotone-fail": count("semimonotone-fail"),
            "no-quadratic-solution": count("no-quadratic-solution"),
            "non-unique-family": count("non-unique-family"),
            "inconsistent-system": count("inconsistent-system"),
        },
        "in_regime_cells": in_regime.len(),
        "in_regime_picard_converged": in_regime_converged,
        "kappa_line_cells": kappa_line.len(),
        "kappa_line_picard_noncontractive": line_noncontractive,
    });
    let plot = plot_preamble("Degeneracy map", "degeneracy.png")
        + "set xlabel 'kappa'\nset ylabel 'rho'\n\
           plot 'table.csv' using 1:(strcol(3) eq 'regular' ? $2 : 1/0) with points pt 5 title 'regular', \
           '' using 1:(strcol(3) ne 'regular' ? $2 : 1/0) with points pt 7 title 'degenerate'\n";
    Ok(Outcome {
        table,
        checks,
        summary,
        plot,
    })
}
