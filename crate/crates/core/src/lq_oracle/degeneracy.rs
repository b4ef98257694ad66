use std::fmt;

use super::{GameMode, LqParams};
use crate::scalar::Real;

const REL_TOL: f64 = 1e-12;
pub(crate) const DEVIATION_LINE: &str = "kappa = (1+gamma)(N-1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Degeneracy {
    Regular,
    /// The consistency relation cannot be solved for the mean control.
    NoQuadraticSolution,
    /// Singular constant system with a homogeneous right-hand side.
    NonUniqueFamily,
    /// Singular constant system with a right-hand side outside its range.
    InconsistentSystem,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Degeneracy::Regular => "Regular",
            Degeneracy::NoQuadraticSolution => "NoQuadraticSolution",
            Degeneracy::NonUniqueFamily => "NonUniqueFamily",
            Degeneracy::InconsistentSystem => "InconsistentSystem",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub classification: Degeneracy,
    pub mode: GameMode,
    /// Violated condition, empty when regular.
    pub condition: &'static str,
    /// Determinant `1 + κ + γ + T(1 + ϱ)` of the mean constant system.
    pub determinant: f64,
}

impl DegeneracyReport {
    pub fn is_regular(&self) -> bool {
        self.classification == Degeneracy::Regular
    }
}

impl fmt::Display for DegeneracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.classification)?;
        if !self.condition.is_empty() {
            write!(f, " ({})", self.condition)?;
        }
        write!(f, ", determinant {:e}", self.determinant)
    }
}

fn near_zero(value: f64, scale: f64) -> bool {
    value.abs() <= REL_TOL * scale.max(1.0)
}

/// Classifies the parameters against the degeneracy lines of the quadratic ansatz.
///
/// In N-player mode the population mean and the per-player deviations each
/// obey a scalar forward-backward pair; the mean pair degenerates on
/// `κ = −(1+γ)`, the deviation pair on `κ = (1+γ)(N−1)`, and each has its own
/// determinant. Deviation checks are skipped for identical initial positions
/// only where the classification depends on the right-hand side.
pub fn classify_degeneracy<T: Real>(params: &LqParams<T>, mode: GameMode) -> DegeneracyReport {
    let kappa = params.kappa.as_f64();
    let rho = params.rho.as_f64();
    let a = 1.0 + params.gamma.as_f64();
    let horizon = params.horizon.as_f64();
    let determinant = params.condition_value().as_f64();
    let report = |classification, condition| DegeneracyReport {
        classification,
        mode,
        condition,
        determinant,
    };

    if near_zero(a + kappa, a + kappa.abs()) {
        return report(Degeneracy::NoQuadraticSolution, "kappa = -(1+gamma)");
    }
    let det_scale = a + kappa.abs() + horizon * (1.0 + rho.abs());
    let (mean0, deviations) = match mode {
        GameMode::MeanField => (params.gaussian_init.map_or(0.0, |g| g.mean.as_f64()), None),
        GameMode::NPlayer => {
            let n = params.n_players();
            let z: Vec<f64> = params.initial_positions.iter().map(|v| v.as_f64()).collect();
            let mean = z.iter().sum::<f64>() / n.max(1) as f64;
            let spread = z.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            (mean, Some((n, spread, z.iter().fold(0.0f64, |m, v| m.max(v.abs())))))
        }
    };

    if let Some((n, _, _)) = deviations {
        let m = (n.max(2) - 1) as f64;
        if near_zero(a - kappa / m, a + kappa.abs() / m) {
            return report(Degeneracy::NoQuadraticSolution, DEVIATION_LINE);
        }
    }
    if near_zero(determinant, det_scale) {
        let scale = deviations.map_or(mean0.abs(), |(_, _, zmax)| zmax);
        return if mean0.abs() <= REL_TOL * scale.max(1.0) {
            report(Degeneracy::NonUniqueFamily, "1+kappa+gamma+T(1+rho) = 0 with zero initial mean")
        } else {
            report(Degeneracy::InconsistentSystem, "1+kappa+gamma+T(1+rho) = 0 with nonzero initial mean")
        };
    }
    if let Some((n, spread, zmax)) = deviations {
        let m = (n.max(2) - 1) as f64;
        let dev_det = a - kappa / m + horizon * (1.0 - rho / m);
        if near_zero(dev_det, a + kappa.abs() / m + horizon * (1.0 + rho.abs() / m)) {
            return if spread <= REL_TOL * zmax.max(1.0) {
                report(Degeneracy::NonUniqueFamily, "1+gamma-(kappa+T rho)/(N-1)+T = 0 with equal positions")
            } else {
                report(Degeneracy::InconsistentSystem, "1+gamma-(kappa+T rho)/(N-1)+T = 0 with unequal positions")
            };
        }
    }
    report(Degeneracy::Regular, "")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq_oracle::GaussianInit;

    fn mf(kappa: f64, rho: f64, gamma: f64, horizon: f64, mean: f64) -> LqParams<f64> {
        LqParams::mean_field(kappa, rho, gamma, horizon, GaussianInit { mean, inv_width: 1.0 }).unwrap()
    }

    #[test]
    fn kappa_line_has_no_quadratic_solution() {
        let r = classify_degeneracy(&mf(-2.0, 0.3, 1.0, 1.0, 1.0), GameMode::MeanField);
        assert_eq!(r.classification, Degeneracy::NoQuadraticSolution);
    }

    #[test]
    fn nplayer_kappa_line() {
        let p = LqParams::nplayer(2.0, 0.0, 0.0, 1.0, vec![0.0, 1.0, 2.0]).unwrap();
        let r = classify_degeneracy(&p, GameMode::NPlayer);
        assert_eq!(r.classification, Degeneracy::NoQuadraticSolution);
        assert_eq!(r.condition, "kappa = (1+gamma)(N-1)");
    }

    #[test]
    fn singular_determinant_depends_on_initial_mean() {
        let r = classify_degeneracy(&mf(-1.0, -2.0, 1.0, 1.0, 0.0), GameMode::MeanField);
        assert_eq!(r.classification, Degeneracy::NonUniqueFamily);
        assert_eq!(r.determinant, 0.0);
        let r = classify_degeneracy(&mf(-1.0, -2.0, 1.0, 1.0, 0.5), GameMode::MeanField);
        assert_eq!(r.classification, Degeneracy::InconsistentSystem);
    }

    #[test]
    fn regular_point() {
        let r = classify_degeneracy(&mf(1.0, 0.0, 0.0, 1.0, 1.0), GameMode::MeanField);
        assert!(r.is_regular());
        assert_eq!(r.determinant, 3.0);
    }

    #[test]
    fn tolerance_is_relative() {
        let r = classify_degeneracy(&mf(-2.0 + 1e-9, 0.3, 1.0, 1.0, 1.0), GameMode::MeanField);
        assert!(r.is_regular());
        let r = classify_degeneracy(&mf(-2.0 + 1e-14, 0.3, 1.0, 1.0, 1.0), GameMode::MeanField);
        assert_eq!(r.classification, Degeneracy::NoQuadraticSolution);
    }
}
