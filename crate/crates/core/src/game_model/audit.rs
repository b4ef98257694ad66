use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CostModel, Population};
use crate::error::{Error, Result};
use crate::lq_oracle::GameMode;
use crate::scalar::Real;

/// Worst relative finite-difference errors of a model's derivative callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport<T> {
    pub points: usize,
    pub d_a_running: T,
    pub d_x_running: T,
    pub d_x_terminal: T,
    pub tolerance: T,
    pub passed: bool,
}

impl<T: Real> AuditReport<T> {
    pub fn max_relative_error(&self) -> T {
        self.d_a_running.max(self.d_x_running).max(self.d_x_terminal)
    }
}

fn central<T: Real>(f: impl Fn(T) -> T, v: T) -> T {
    let h = T::epsilon().cbrt() * v.abs().max(T::one());
    (f(v + h) - f(v - h)) / (h + h)
}

/// Compares `D_aL`, `D_xL` and `D_xg` against central differences of `L` and
/// `g` at `points` random states, controls and populations of six members.
pub fn gradient_audit<T: Real, M: CostModel<T> + ?Sized>(model: &M, points: usize, seed: u64) -> Result<AuditReport<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tolerance = T::lit(1e-5).max(T::epsilon().powf(T::lit(2.0 / 3.0)) * T::lit(100.0));
    let mut worst = [T::zero(); 3];
    let rel = |fd: T, exact: T| (fd - exact).abs() / exact.abs().max(T::one());
    for k in 0..points {
        let xs: Vec<T> = (0..6).map(|_| T::lit(rng.random_range(-2.0..2.0))).collect();
        let as_: Vec<T> = (0..6).map(|_| T::lit(rng.random_range(-2.0..2.0))).collect();
        let pop = Population::unchecked(&xs, &as_);
        let ctx = if k % 2 == 0 { pop.others(0) } else { pop.measure() };
        let (x, a) = (xs[0], as_[0]);
        let checks = [
            (central(|v| model.running(x, v, &ctx), a), model.d_a_running(x, a, &ctx)),
            (central(|v| model.running(v, a, &ctx), x), model.d_x_running(x, a, &ctx)),
            (central(|v| model.terminal(v, &ctx), x), model.d_x_terminal(x, &ctx)),
        ];
        for (w, (fd, exact)) in worst.iter_mut().zip(checks) {
            if !fd.is_finite() || !exact.is_finite() {
                return Err(Error::Callback { callback: "gradient audit" });
            }
            *w = w.max(rel(fd, exact));
        }
    }
    Ok(AuditReport {
        points,
        d_a_running: worst[0],
        d_x_running: worst[1],
        d_x_terminal: worst[2],
        tolerance,
        passed: worst.iter().all(|&w| w <= tolerance),
    })
}

/// A pair of configurations `(x, a)` and `(x̄, ā)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample<T> {
    pub x: Vec<T>,
    pub a: Vec<T>,
    pub x_bar: Vec<T>,
    pub a_bar: Vec<T>,
}

/// Semimonotonicity constants to be tested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants<T> {
    pub c_la: T,
    pub c_lx: T,
    pub c_g: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeStats<T> {
    pub trials: usize,
    pub min_running_gap: T,
    pub mean_running_gap: T,
    pub min_terminal_gap: T,
    pub mean_terminal_gap: T,
}

impl<T: Real> ProbeStats<T> {
    /// A negative minimum certifies that the declared constants are wrong.
    pub fn falsified(&self, tol: T) -> bool {
        self.min_running_gap < -tol || self.min_terminal_gap < -tol
    }
}

/// Evaluates the displacement semimonotonicity inequalities on sampled pairs.
///
/// In N-player mode the vectors are the players' states and controls and the
/// sums run over players; in mean-field mode they are i.i.d. batches and sums
/// become batch averages.
pub fn semimon_probe<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    trials: usize,
    mut sampler: impl FnMut(usize) -> ProbeSample<T>,
    mode: GameMode,
    constants: DeclaredConstants<T>,
) -> Result<ProbeStats<T>> {
    if trials == 0 {
        return Err(Error::Empty);
    }
    let mut stats = ProbeStats {
        trials,
        min_running_gap: T::infinity(),
        mean_running_gap: T::zero(),
        min_terminal_gap: T::infinity(),
        mean_terminal_gap: T::zero(),
    };
    for k in 0..trials {
        let s = sampler(k);
        let n = s.x.len();
        if n == 0 || [s.a.len(), s.x_bar.len(), s.a_bar.len()].iter().any(|&m| m != n) {
            return Err(Error::Shape("probe sample vectors must share a nonzero length".into()));
        }
        let pop = Population::unchecked(&s.x, &s.a);
        let pop_bar = Population::unchecked(&s.x_bar, &s.a_bar);
        let states = Population::unchecked(&s.x, &[]);
        let states_bar = Population::unchecked(&s.x_bar, &[]);
        let (mut lhs, mut lhs_g, mut da2, mut dx2) = (T::zero(), T::zero(), T::zero(), T::zero());
        for i in 0..n {
            let (c, cb) = (pop.context(mode, i), pop_bar.context(mode, i));
            let (x, a, xb, ab) = (s.x[i], s.a[i], s.x_bar[i], s.a_bar[i]);
            let (dx, da) = (x - xb, a - ab);
            lhs += (model.d_a_running(x, a, &c) - model.d_a_running(xb, ab, &cb)) * da
                + (model.d_x_running(x, a, &c) - model.d_x_running(xb, ab, &cb)) * dx;
            let (g, gb) = (states.context(mode, i), states_bar.context(mode, i));
            lhs_g += (model.d_x_terminal(x, &g) - model.d_x_terminal(xb, &gb)) * dx;
            da2 += da * da;
            dx2 += dx * dx;
        }
        if mode == GameMode::MeanField {
            let w = T::from_usize_lossy(n);
            lhs /= w;
            lhs_g /= w;
            da2 /= w;
            dx2 /= w;
        }
        let running = lhs - constants.c_la * da2 + constants.c_lx * dx2;
        let terminal = lhs_g + constants.c_g * dx2;
        stats.min_running_gap = stats.min_running_gap.min(running);
        stats.min_terminal_gap = stats.min_terminal_gap.min(terminal);
        stats.mean_running_gap += running;
        stats.mean_terminal_gap += terminal;
    }
    let t = T::from_usize_lossy(trials);
    stats.mean_running_gap /= t;
    stats.mean_terminal_gap /= t;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{LqModel, PotentialModel};
    use crate::lq_oracle::{semimon_constants, LqParams};

    fn sampler(n: usize, seed: u64) -> impl FnMut(usize) -> ProbeSample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        move |_| {
            let mut v = || (0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
            ProbeSample {
                x: v(),
                a: v(),
                x_bar: v(),
                a_bar: v(),
            }
        }
    }

    fn declared(kappa: f64, rho: f64, gamma: f64, n: usize) -> (LqModel<f64>, DeclaredConstants<f64>) {
        let p = LqParams::nplayer(kappa, rho, gamma, 1.0, vec![0.0; n]).unwrap();
        let r = semimon_constants(&p, GameMode::NPlayer);
        (
            LqModel::new(kappa, rho, gamma).unwrap(),
            DeclaredConstants {
                c_la: r.c_la_spectral,
                c_lx: r.c_lx,
                c_g: r.c_g_spectral,
            },
        )
    }

    #[test]
    fn builtins_pass_the_audit() {
        let lq = gradient_audit(&LqModel::new(0.7, -0.4, 0.3).unwrap(), 100, 1).unwrap();
        assert!(lq.passed, "{lq:?}");
        let pot = gradient_audit(&PotentialModel::new(1.0, 2.0, 0.5, 0.3).unwrap(), 100, 2).unwrap();
        assert!(pot.passed, "{pot:?}");
    }

    #[test]
    fn identical_pairs_have_zero_gap() {
        let (m, c) = declared(0.5, 0.5, 1.0, 4);
        let x = vec![0.1, -0.3, 2.0, 1.0];
        let a = vec![1.0, 0.0, -1.0, 0.5];
        let s = ProbeSample {
            x: x.clone(),
            a: a.clone(),
            x_bar: x,
            a_bar: a,
        };
        let stats = semimon_probe(&m, 1, |_| s.clone(), GameMode::NPlayer, c).unwrap();
        assert_eq!(stats.min_running_gap, 0.0);
        assert_eq!(stats.min_terminal_gap, 0.0);
    }

    #[test]
    fn spectral_constants_hold() {
        for &(k, r) in &[(1.0, 0.5), (-0.8, -0.6), (2.5, 3.0)] {
            let (m, c) = declared(k, r, 0.5, 4);
            let stats = semimon_probe(&m, 2000, sampler(4, 7), GameMode::NPlayer, c).unwrap();
            assert!(!stats.falsified(1e-9), "{k} {r}: {stats:?}");
        }
    }

    #[test]
    fn inflated_constant_is_falsified() {
        let (m, mut c) = declared(1.0, 0.0, 0.0, 3);
        c.c_la += 1.0;
        let stats = semimon_probe(&m, 500, sampler(3, 9), GameMode::NPlayer, c).unwrap();
        assert!(stats.min_running_gap < 0.0);
    }
}
