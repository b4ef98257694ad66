use super::legendre::{legendre_argmax, NewtonConfig};
use super::{CostModel, Population};
use crate::error::{Error, Result};
use crate::lq_oracle::GameMode;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping<T> {
    /// Plain iteration while the contraction estimate stays below 0.9,
    /// relaxation 0.5 afterwards.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig<T> {
    pub tol: T,
    pub max_iters: usize,
    pub damping: Damping<T>,
    /// Consecutive growing updates that count as divergence.
    pub growth_window: usize,
    /// Update norm, relative to the first one, that counts as divergence.
    pub blowup_factor: T,
    /// Successive-update ratio treated as stagnation once damping is active.
    pub stagnation_ratio: T,
    pub newton: NewtonConfig<T>,
}

impl<T: Real> Default for FixedPointConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::tolerance(1e-10),
            max_iters: 10_000,
            damping: Damping::Auto,
            growth_window: 5,
            blowup_factor: T::lit(1e6),
            stagnation_ratio: T::lit(1.0 - 1e-3),
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport<T> {
    pub controls: Vec<T>,
    pub iterations: usize,
    /// Sup-norm of the last fixed-point residual `|Φ(a) − a|`.
    pub update_norm: T,
    /// Ratio of successive residual norms near convergence.
    pub contraction_factor: T,
    /// Relaxation factor in use at termination.
    pub damping: T,
}

/// Fixed point of `a^i ← argmax(x^i, p^i, m^{N,−i}(x, a))` over the players.
pub fn consistency_fixed_point_nplayer<T: Real, M: CostModel<T> + ?Sized>(
    positions: &[T],
    costates: &[T],
    model: &M,
    config: &FixedPointConfig<T>,
    warm_start: Option<&[T]>,
) -> Result<FixedPointReport<T>> {
    if positions.len() < 2 {
        return Err(Error::invalid("positions", "need at least two players"));
    }
    iterate(GameMode::NPlayer, positions, costates, model, config, warm_start)
}

/// Fixed point of `a_k ← argmax(x_k, p_k, μ(x, a))` with the empirical
/// measure including the particle itself.
pub fn consistency_fixed_point_mf<T: Real, M: CostModel<T> + ?Sized>(
    positions: &[T],
    costates: &[T],
    model: &M,
    config: &FixedPointConfig<T>,
    warm_start: Option<&[T]>,
) -> Result<FixedPointReport<T>> {
    if positions.is_empty() {
        return Err(Error::Empty);
    }
    iterate(GameMode::MeanField, positions, costates, model, config, warm_start)
}

fn iterate<T: Real, M: CostModel<T> + ?Sized>(
    mode: GameMode,
    positions: &[T],
    costates: &[T],
    model: &M,
    config: &FixedPointConfig<T>,
    warm_start: Option<&[T]>,
) -> Result<FixedPointReport<T>> {
    let n = positions.len();
    if costates.len() != n {
        return Err(Error::Shape(format!("{n} positions but {} costates", costates.len())));
    }
    let mut controls = match warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        Some(w) => return Err(Error::Shape(format!("{n} positions but {} warm-start controls", w.len()))),
        None => vec![T::zero(); n],
    };
    let mut proposal = vec![T::zero(); n];
    let sweep = |controls: &[T], proposal: &mut [T]| -> Result<T> {
        let pop = Population::unchecked(positions, controls);
        let mut norm = T::zero();
        for i in 0..n {
            let ctx = pop.context(mode, i);
            proposal[i] = legendre_argmax(model, positions[i], costates[i], &ctx, Some(controls[i]), &config.newton)?;
            norm = norm.max((proposal[i] - controls[i]).abs());
        }
        Ok(norm)
    };

    if model.metadata().coupling_norm == T::zero() {
        sweep(&controls, &mut proposal)?;
        return Ok(FixedPointReport {
            controls: proposal,
            iterations: 1,
            update_norm: T::zero(),
            contraction_factor: T::zero(),
            damping: T::one(),
        });
    }

    let (mut theta, auto) = match config.damping {
        Damping::Auto => (T::one(), true),
        Damping::Fixed(t) => (t, false),
    };
    let mut first: Option<T> = None;
    let mut previous: Option<T> = None;
    let mut factor = T::zero();
    let mut growth = 0usize;
    let mut stagnation = 0usize;
    let mut residual = T::infinity();

    for iteration in 1..=config.max_iters {
        residual = sweep(&controls, &mut proposal)?;
        if residual <= config.tol {
            return Ok(FixedPointReport {
                controls: proposal,
                iterations: iteration,
                update_norm: residual,
                contraction_factor: factor,
                damping: theta,
            });
        }
        let first_norm = *first.get_or_insert(residual);
        if let Some(prev) = previous {
            let ratio = residual / prev;
            if prev > config.tol * T::lit(1e3) {
                factor = ratio;
            }
            growth = if ratio > T::one() { growth + 1 } else { 0 };
            if growth >= config.growth_window || residual > config.blowup_factor * first_norm {
                return Err(Error::NonContraction {
                    factor: ratio.as_f64(),
                    iterations: iteration,
                });
            }
            let damped = !auto || theta < T::one();
            if damped {
                stagnation = if ratio >= config.stagnation_ratio { stagnation + 1 } else { 0 };
                if stagnation >= config.growth_window {
                    return Err(Error::NonContraction {
                        factor: ratio.as_f64(),
                        iterations: iteration,
                    });
                }
            } else if ratio >= T::lit(0.9) {
                theta = T::lit(0.5);
                growth = 0;
            }
        }
        previous = Some(residual);
        for (a, &b) in controls.iter_mut().zip(&proposal) {
            *a = (T::one() - theta) * *a + theta * b;
        }
    }
    Err(Error::MaxIterations {
        iterations: config.max_iters,
        update: residual.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::LqModel;

    fn cfg() -> FixedPointConfig<f64> {
        FixedPointConfig::default()
    }

    #[test]
    fn two_player_symmetric_example() {
        let m = LqModel::new(0.5, 0.0, 0.0).unwrap();
        let r = consistency_fixed_point_nplayer(&[0.0, 0.0], &[1.0, 1.0], &m, &cfg(), None).unwrap();
        for a in &r.controls {
            assert!((a + 2.0 / 3.0).abs() < 1e-10);
        }
        assert!((r.contraction_factor - 0.5).abs() < 0.05);
    }

    #[test]
    fn decoupled_needs_one_sweep() {
        let m = LqModel::new(0.0, 0.0, 1.0).unwrap();
        let r = consistency_fixed_point_nplayer(&[0.0; 4], &[1.0, -2.0, 0.5, 0.0], &m, &cfg(), None).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.controls, vec![-0.5, 1.0, -0.25, 0.0]);
    }

    #[test]
    fn unit_ratio_is_detected() {
        let m = LqModel::new(-1.0, 0.0, 0.0).unwrap();
        let err = consistency_fixed_point_nplayer(&[0.0, 0.0], &[1.0, 1.0], &m, &cfg(), None).unwrap_err();
        match err {
            Error::NonContraction { iterations, factor } => {
                assert!(iterations <= 200);
                assert!(factor > 0.99);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_particle_self_consistency() {
        let m = LqModel::new(0.5, 0.0, 0.0).unwrap();
        let r = consistency_fixed_point_mf(&[0.0], &[1.0], &m, &cfg(), None).unwrap();
        assert!((r.controls[0] + 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn mean_control_of_particles() {
        let m = LqModel::new(0.7, 0.0, 0.4).unwrap();
        let p: Vec<f64> = (0..100).map(|k| ((k * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let x = vec![0.0; 100];
        let r = consistency_fixed_point_mf(&x, &p, &m, &cfg(), None).unwrap();
        let mean: f64 = r.controls.iter().sum::<f64>() / 100.0;
        let pbar: f64 = p.iter().sum::<f64>() / 100.0;
        assert!((mean + pbar / (1.0 + 0.4 + 0.7)).abs() < 1e-10);
    }

    #[test]
    fn strong_coupling_diverges() {
        let m = LqModel::new(-3.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            consistency_fixed_point_nplayer(&[0.0; 3], &[1.0, 0.5, -0.2], &m, &cfg(), None),
            Err(Error::NonContraction { .. })
        ));
    }
}
