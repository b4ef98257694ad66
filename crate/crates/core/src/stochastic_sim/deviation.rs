use std::sync::Arc;

use super::{initial_states, path_noise, run_path, stream_of, CostEstimate, InitialLaw, Moments, PathCost, SimConfig};
use super::{Feedback, FeedbackSet};
use crate::error::{Error, Result};
use crate::game_model::CostModel;
use crate::scalar::Real;

/// Unit deviation `δ₀(t, x)` added to a player's equilibrium feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Direction<T> {
    /// `δ₀ = 1`.
    Shift,
    /// `δ₀ = α(t, x)`, a rescaling of the feedback.
    Scale,
    /// `δ₀ = x`, a change of gain.
    Linear,
    /// `δ₀ = 1` on `[start, end)`, zero elsewhere.
    Bump { start: T, end: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationFamily<T> {
    pub name: String,
    pub direction: Direction<T>,
    /// `+1` or `-1`.
    pub sign: T,
}

/// Shift, scale and gain deviations of both signs, plus constant bumps of
/// both signs on each third of `[0, horizon]`.
pub fn standard_families<T: Real>(horizon: T) -> Vec<DeviationFamily<T>> {
    let third = horizon / T::lit(3.0);
    let mut dirs = vec![
        ("shift", Direction::Shift),
        ("scale", Direction::Scale),
        ("gain", Direction::Linear),
    ];
    for (k, name) in ["bump-early", "bump-mid", "bump-late"].into_iter().enumerate() {
        let start = third * T::from_usize_lossy(k);
        let end = if k == 2 { horizon + T::one() } else { start + third };
        dirs.push((name, Direction::Bump { start, end }));
    }
    dirs.into_iter()
        .flat_map(|(name, direction)| {
            [("+", T::one()), ("-", -T::one())].map(|(s, sign)| DeviationFamily {
                name: format!("{name}{s}"),
                direction,
                sign,
            })
        })
        .collect()
}

struct Perturbed<T: Real> {
    base: Arc<dyn Feedback<T>>,
    direction: Direction<T>,
    amplitude: T,
}

impl<T: Real> Feedback<T> for Perturbed<T> {
    fn control(&self, t: T, x: T) -> T {
        let a = self.base.control(t, x);
        let d = match self.direction {
            Direction::Shift => T::one(),
            Direction::Scale => a,
            Direction::Linear => x,
            Direction::Bump { start, end } => {
                if t >= start && t < end {
                    T::one()
                } else {
                    T::zero()
                }
            }
        };
        a + self.amplitude * d
    }
}

impl<T: Real> DeviationFamily<T> {
    pub fn perturb(&self, base: Arc<dyn Feedback<T>>, epsilon: T) -> Arc<dyn Feedback<T>> {
        Arc::new(Perturbed {
            base,
            direction: self.direction,
            amplitude: epsilon * self.sign,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Not refuted, but the standard error exceeds a third of `|ΔJ|`.
    Inconclusive,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationOutcome<T> {
    pub family: String,
    pub epsilon: T,
    /// Mean and standard error of `J(u) − J(α)` over common paths.
    pub delta: CostEstimate<T>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport<T> {
    pub player: usize,
    pub baseline: CostEstimate<T>,
    pub outcomes: Vec<DeviationOutcome<T>>,
    /// Per family, least-squares `c` in `ΔJ ≈ c ε²`.
    pub curvature: Vec<(String, T)>,
    pub verdict: Verdict,
}

impl<T: Real> DeviationReport<T> {
    pub fn failures(&self) -> impl Iterator<Item = &DeviationOutcome<T>> {
        self.outcomes.iter().filter(|o| o.verdict == Verdict::Fail)
    }

    /// Whether every family passes: no outcome refuted.
    pub fn passes(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    /// Writes `player,family,epsilon,dJ_mean,dJ_stderr,verdict` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "player,family,epsilon,dJ_mean,dJ_stderr,verdict")?;
        for o in &self.outcomes {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.player, o.family, o.epsilon, o.delta.mean, o.delta.std_error, o.verdict
            )?;
        }
        Ok(())
    }
}

fn classify<T: Real>(delta: &CostEstimate<T>, scale: T) -> Verdict {
    let three = T::lit(3.0) * delta.std_error;
    // roundoff allowance for deterministic runs
    let floor = T::epsilon() * T::lit(1024.0) * (T::one() + scale.abs());
    if delta.mean < -three - floor {
        Verdict::Fail
    } else if delta.std_error > T::zero() && delta.mean.abs() < three {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

/// Estimates `ΔJ = J^i(u; α^{−i}) − J^i(α)` for `u = α^i + ε·sign·δ₀` over
/// every family and every `ε`, with common random numbers.
///
/// Feedbacks are distributed, so the other players' paths do not react to
/// the deviation and are reused from the baseline run.
#[allow(clippy::too_many_arguments)]
pub fn deviation_test<T: Real, M: CostModel<T> + ?Sized>(
    equilibrium: &FeedbackSet<T>,
    init: &[InitialLaw<T>],
    model: &M,
    player: usize,
    families: &[DeviationFamily<T>],
    epsilons: &[T],
    horizon: T,
    config: &SimConfig<T>,
) -> Result<DeviationReport<T>> {
    super::check_inputs(equilibrium, init, config)?;
    let n = equilibrium.len();
    if player >= n {
        return Err(Error::Shape(format!("player {player} out of {n}")));
    }
    if epsilons.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("epsilons", "must be finite"));
    }
    let grid = config.grid(horizon)?;
    let fbs: Vec<&dyn Feedback<T>> = equilibrium.feedbacks.iter().map(|f| f.as_ref()).collect();
    let scenarios: Vec<(usize, T, Arc<dyn Feedback<T>>)> = families
        .iter()
        .enumerate()
        .flat_map(|(k, fam)| {
            let base = equilibrium.feedbacks[player].clone();
            epsilons.iter().map(move |&e| (k, e, fam.perturb(base.clone(), e)))
        })
        .collect();

    let paths = if config.deterministic(init) { 1 } else { config.n_paths };
    let pairing = config.antithetic && paths > 1;
    let nodes = grid.len();
    let dt = grid.dt();
    let vol_unit = (T::lit(2.0) * config.beta * dt).sqrt();
    let mut cost = PathCost::new(model, player, &grid);
    let mut base_moments = Moments::new();
    let mut moments = vec![Moments::new(); scenarios.len()];
    let mut pending_base = T::zero();
    let mut pending = vec![T::zero(); scenarios.len()];
    let (mut xs, mut as_) = (vec![T::zero(); nodes * n], vec![T::zero(); nodes * n]);
    let (mut noise, mut x0) = (Vec::new(), vec![T::zero(); n]);
    let (mut xrow, mut arow) = (vec![T::zero(); n], vec![T::zero(); n]);

    for p in 0..paths {
        let (stream, sign) = stream_of(config, p);
        path_noise(config.seed, stream, n, grid.steps(), &mut noise);
        initial_states(config.seed, stream, init, sign, &mut x0);
        run_path(&fbs, &grid, config.beta, &x0, &noise, sign, p, |m, x, a| {
            xs[m * n..(m + 1) * n].copy_from_slice(x);
            as_[m * n..(m + 1) * n].copy_from_slice(a);
            cost.visit(m, x, a);
        })?;
        let j0 = cost.take();
        for (s, (_, _, fb)) in scenarios.iter().enumerate() {
            let mut xi = x0[player];
            for m in 0..nodes {
                let t = grid.node(m);
                let ai = fb.control(t, xi);
                xrow.copy_from_slice(&xs[m * n..(m + 1) * n]);
                arow.copy_from_slice(&as_[m * n..(m + 1) * n]);
                xrow[player] = xi;
                arow[player] = ai;
                cost.visit(m, &xrow, &arow);
                if m + 1 < nodes {
                    let dw = if config.beta > T::zero() {
                        vol_unit * sign * noise[m * n + player]
                    } else {
                        T::zero()
                    };
                    xi = xi + ai * dt + dw;
                    if !xi.is_finite() {
                        return Err(Error::BlowUp { path: p, node: m + 1 });
                    }
                }
            }
            let dj = cost.take() - j0;
            if pairing {
                if p % 2 == 0 {
                    pending[s] = dj;
                } else {
                    moments[s].push((pending[s] + dj) / T::lit(2.0));
                }
            } else {
                moments[s].push(dj);
            }
        }
        if pairing {
            if p % 2 == 0 {
                pending_base = j0;
            } else {
                base_moments.push((pending_base + j0) / T::lit(2.0));
            }
        } else {
            base_moments.push(j0);
        }
    }

    let baseline = base_moments.estimate(config.n_paths);
    let outcomes: Vec<DeviationOutcome<T>> = scenarios
        .iter()
        .zip(&moments)
        .map(|((k, e, _), mom)| {
            let delta = mom.estimate(config.n_paths);
            DeviationOutcome {
                family: families[*k].name.clone(),
                epsilon: *e,
                verdict: classify(&delta, baseline.mean),
                delta,
            }
        })
        .collect();
    let curvature = families
        .iter()
        .map(|fam| {
            let (num, den) = outcomes
                .iter()
                .filter(|o| o.family == fam.name)
                .fold((T::zero(), T::zero()), |(n, d), o| {
                    let e2 = o.epsilon * o.epsilon;
                    (n + o.delta.mean * e2, d + e2 * e2)
                });
            let c = if den > T::zero() { num / den } else { T::nan() };
            (fam.name.clone(), c)
        })
        .collect();
    let verdict = if outcomes.iter().any(|o| o.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if !outcomes.is_empty() && outcomes.iter().all(|o| o.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(DeviationReport {
        player,
        baseline,
        outcomes,
        curvature,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::LqModel;
    use crate::grid::TimeGrid;
    use crate::lq_oracle::{solve_nplayer_lq, LqParams};
    use crate::stochastic_sim::AffineFeedback;

    fn setup(beta: f64) -> (FeedbackSet<f64>, Vec<InitialLaw<f64>>, LqModel<f64>) {
        let z = vec![0.4, -0.6, 1.0];
        let params = LqParams::nplayer(0.5, 0.3, 1.0, 1.0, z.clone()).unwrap().with_beta(beta).unwrap();
        let sol = solve_nplayer_lq(&params, &TimeGrid::new(1.0, 1000).unwrap()).unwrap();
        let init = z.iter().map(|&v| InitialLaw::Dirac(v)).collect();
        (FeedbackSet::from_lq(&sol), init, LqModel::from_params(&params))
    }

    fn cfg(beta: f64, n_paths: usize) -> SimConfig<f64> {
        SimConfig {
            beta,
            n_paths,
            dt: 1e-3,
            seed: 42,
            antithetic: true,
            ..SimConfig::default()
        }
    }

    #[test]
    fn twelve_standard_families() {
        let f = standard_families(1.0f64);
        assert_eq!(f.len(), 12);
        let names: std::collections::BTreeSet<_> = f.iter().map(|d| d.name.clone()).collect();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn zero_perturbation_is_exactly_zero() {
        let (fb, init, model) = setup(0.3);
        let r = deviation_test(&fb, &init, &model, 0, &standard_families(1.0), &[0.0], 1.0, &cfg(0.3, 20)).unwrap();
        for o in &r.outcomes {
            assert_eq!(o.delta.mean, 0.0);
            assert_eq!(o.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn deterministic_shift_is_quadratic() {
        let (fb, init, model) = setup(0.0);
        let fam = &standard_families(1.0)[..1];
        let r = deviation_test(&fb, &init, &model, 1, fam, &[0.1, 0.05], 1.0, &cfg(0.0, 10)).unwrap();
        let (d1, d2) = (r.outcomes[0].delta.mean, r.outcomes[1].delta.mean);
        assert!(d1 > 0.0 && d2 > 0.0);
        let ratio = d1 / d2;
        assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn corrupted_offset_is_refuted() {
        let (fb, init, model) = setup(0.0);
        let lq = solve_nplayer_lq(
            &LqParams::nplayer(0.5, 0.3, 1.0, 1.0, vec![0.4, -0.6, 1.0]).unwrap(),
            &TimeGrid::new(1.0, 1000).unwrap(),
        )
        .unwrap();
        let off: Vec<f64> = lq.offset[0].iter().map(|c| c + 0.5).collect();
        let shifted = AffineFeedback::new(lq.grid, lq.gain.clone(), off).unwrap();
        let bad = fb.with(0, Arc::new(shifted));
        let r = deviation_test(&bad, &init, &model, 0, &standard_families(1.0), &[0.1, 0.25], 1.0, &cfg(0.0, 2)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn noisy_equilibrium_passes_and_is_monotone() {
        let (fb, init, model) = setup(0.5);
        let eps = [0.0, 0.05, 0.1, 0.15, 0.2];
        let fams = standard_families(1.0);
        let r = deviation_test(&fb, &init, &model, 2, &fams[..2], &eps, 1.0, &cfg(0.5, 200)).unwrap();
        assert!(r.passes());
        for fam in &fams[..2] {
            let d: Vec<f64> = r.outcomes.iter().filter(|o| o.family == fam.name).map(|o| o.delta.mean).collect();
            assert!(d.windows(2).all(|w| w[1] >= w[0]), "{d:?}");
        }
    }
}
