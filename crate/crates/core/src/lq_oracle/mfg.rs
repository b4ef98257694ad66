use std::io::Write;

use super::degeneracy::classify_degeneracy;
use super::pair::{AffinePair, PairClosedForm};
use super::{riccati_unchecked, GameMode, LqEval, LqParams, LqValue};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::Real;

/// Closed-form mean-field equilibrium for a Gaussian initial law.
///
/// The state law stays Gaussian with mean `μ(t)` and inverse width `s(t)`;
/// the control law `ν_t` is its image under the affine feedback.
#[derive(Debug, Clone)]
pub struct LqMfgSolution<T> {
    pub params: LqParams<T>,
    closed: PairClosedForm<T>,
    pub b: T,
    /// `D` in the κ-scaled form; `d = κ·d_scaled`.
    pub d: T,
    pub d_scaled: T,
    pub e: T,
    /// `1 + κ + γ + T(1 + ϱ)`.
    pub determinant: T,
}

pub fn solve_mfg_lq<T: Real>(params: &LqParams<T>) -> Result<LqMfgSolution<T>> {
    params.validate(GameMode::MeanField)?;
    let report = classify_degeneracy(params, GameMode::MeanField);
    if !report.is_regular() {
        return Err(Error::Degenerate(report));
    }
    let init = params.gaussian_init.expect("validated");
    let pair = AffinePair {
        kappa: params.kappa,
        rho: params.rho,
        gamma: params.gamma,
        horizon: params.horizon,
    };
    let closed = pair.closed_form(init.mean)?;
    let horizon = params.horizon;
    let terminal = (params.rho * closed.state(horizon)).powi(2) / T::lit(2.0);
    let e = terminal - closed.q_without_constant(horizon);
    Ok(LqMfgSolution {
        params: params.clone(),
        closed,
        b: closed.b,
        d: params.kappa * closed.d_scaled,
        d_scaled: closed.d_scaled,
        e,
        determinant: closed.determinant,
    })
}

impl<T: Real> LqMfgSolution<T> {
    /// The constant system for `(B, D)` in the κ-scaled form, undefined at κ = 0.
    pub fn constant_matrix(&self) -> Option<[[T; 2]; 2]> {
        if self.params.kappa == T::zero() {
            return None;
        }
        let k = self.params.kappa;
        let m = self.closed.pair.constant_system();
        Some([[m[0][0], m[0][1] / k], [m[1][0], m[1][1] / k]])
    }

    pub fn riccati(&self, t: T) -> T {
        riccati_unchecked(t, &self.params)
    }

    pub fn gain(&self, t: T) -> T {
        -self.riccati(t) / self.params.curvature()
    }

    pub fn mean(&self, t: T) -> T {
        self.closed.state(t)
    }

    pub fn costate(&self, t: T) -> T {
        self.closed.costate(t)
    }

    pub fn offset(&self, t: T) -> T {
        self.closed.offset(t)
    }

    pub fn constant(&self, t: T) -> T {
        let a = self.params.curvature();
        let noise = if self.params.beta > T::zero() {
            self.params.beta * a * (self.params.tau(t) / a).ln()
        } else {
            T::zero()
        };
        self.closed.q_without_constant(t) + self.e + noise
    }

    pub fn variance(&self, t: T) -> T {
        let init = self.params.gaussian_init.expect("validated");
        let ratio = self.params.tau(t) / self.params.tau(T::zero());
        init.variance() * ratio * ratio + T::lit(2.0) * self.params.beta * t * ratio
    }

    /// Inverse width `s(t)` of the Gaussian state law.
    pub fn inv_width(&self, t: T) -> T {
        T::one() / (T::lit(2.0) * self.variance(t)).sqrt()
    }

    /// Mean of `ν_t`.
    pub fn mean_control(&self, t: T) -> T {
        self.offset(t) + self.gain(t) * self.mean(t)
    }

    /// Mean and standard deviation of the Gaussian control law `ν_t`.
    pub fn control_law(&self, t: T) -> (T, T) {
        (self.mean_control(t), self.gain(t).abs() * self.variance(t).sqrt())
    }

    /// Residual of the constant system at the computed `(B, D)`.
    pub fn system_residual(&self) -> T {
        let m = self.closed.pair.constant_system();
        let x0 = self.params.gaussian_init.expect("validated").mean;
        let r0 = m[0][0] * self.b + m[0][1] * self.d_scaled - x0;
        let r1 = m[1][0] * self.b + m[1][1] * self.d_scaled;
        r0.abs().max(r1.abs())
    }

    /// Writes `t,r,p,q,K,C,X,mu,s` rows on `grid`, with `X` the mean path.
    pub fn write_csv<W: Write>(&self, grid: &TimeGrid<T>, mut out: W) -> Result<()> {
        writeln!(out, "t,r,p,q,K,C,X,mu,s")?;
        for t in grid.nodes() {
            let mu = self.mean(t);
            writeln!(
                out,
                "{t},{},{},{},{},{},{mu},{mu},{}",
                self.riccati(t),
                self.costate(t),
                self.constant(t),
                self.gain(t),
                self.offset(t),
                self.inv_width(t)
            )?;
        }
        Ok(())
    }
}

impl<T: Real> LqValue<T> for LqMfgSolution<T> {
    fn params(&self) -> &LqParams<T> {
        &self.params
    }

    fn eval(&self, _player: usize, t: T, x: T) -> LqEval<T> {
        let r = self.riccati(t);
        let p = self.costate(t);
        LqEval {
            value: r * x * x / T::lit(2.0) + p * x + self.constant(t),
            gradient: r * x + p,
            feedback: self.gain(t) * x + self.offset(t),
            mean_control: self.mean_control(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq_oracle::GaussianInit;

    fn params(kappa: f64, rho: f64, gamma: f64, horizon: f64, mean: f64) -> LqParams<f64> {
        LqParams::mean_field(kappa, rho, gamma, horizon, GaussianInit { mean, inv_width: 2.0 }).unwrap()
    }

    #[test]
    fn worked_example() {
        let s = solve_mfg_lq(&params(1.0, 0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!(s.constant_matrix().unwrap(), [[1.0, -2.0], [-1.0, 5.0]]);
        assert!((s.determinant - 3.0).abs() < 1e-15);
        assert!((s.b - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.d - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_case_vanishes() {
        let s = solve_mfg_lq(&params(0.8, 0.0, 0.5, 1.0, 0.0)).unwrap();
        for &t in &[0.0, 0.4, 1.0] {
            assert_eq!(s.mean(t), 0.0);
            assert_eq!(s.costate(t), 0.0);
            assert_eq!(s.offset(t), 0.0);
        }
    }

    #[test]
    fn terminal_conditions() {
        let s = solve_mfg_lq(&params(-0.6, 0.7, 0.4, 1.3, 0.9)).unwrap();
        let t = 1.3;
        assert!((s.costate(t) - 0.7 * s.mean(t)).abs() < 1e-14);
        assert!((s.constant(t) - 0.5 * (0.7 * s.mean(t)).powi(2)).abs() < 1e-14);
        for &x in &[-2.0, 0.0, 1.7] {
            let v = s.eval(0, t, x).value;
            assert!((v - 0.5 * (x + 0.7 * s.mean(t)).powi(2)).abs() < 1e-13);
        }
        assert!(s.system_residual() < 1e-14);
    }

    #[test]
    fn constant_satisfies_its_ode() {
        // q' = −(p²/2 + a p C + γ a C²/2) − β r
        for beta in [0.0, 0.3] {
            let p = params(1.7, -0.4, 0.6, 2.0, 1.2).with_beta(beta).unwrap();
            let s = solve_mfg_lq(&p).unwrap();
            let a = 1.6;
            let h = 1e-5;
            for &t in &[0.2, 1.0, 1.8] {
                let dq = (s.constant(t + h) - s.constant(t - h)) / (2.0 * h);
                let (pp, c) = (s.costate(t), s.offset(t));
                let rhs = -(pp * pp / 2.0 + a * pp * c + 0.6 * a * c * c / 2.0) - beta * s.riccati(t);
                assert!((dq - rhs).abs() < 1e-7, "t={t}: {dq} vs {rhs}");
            }
        }
    }

    #[test]
    fn inverse_width_without_noise() {
        let s = solve_mfg_lq(&params(0.5, 0.5, 1.0, 1.0, 0.0)).unwrap();
        for &t in &[0.0, 0.5, 1.0] {
            assert!((s.inv_width(t) - 2.0 * 3.0 / (3.0 - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn consistency_is_exact() {
        let s = solve_mfg_lq(&params(-0.9, 1.5, 0.2, 0.7, -0.3)).unwrap();
        for &t in &[0.0, 0.33, 0.7] {
            let e = s.eval(0, t, 0.8);
            assert!(e.consistency_residual(-0.9, 0.2).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_system_is_classified() {
        let err = solve_mfg_lq(&params(-1.0, -2.0, 1.0, 1.0, 0.0)).unwrap_err();
        match err {
            Error::Degenerate(r) => assert_eq!(r.classification, super::super::Degeneracy::NonUniqueFamily),
            other => panic!("{other:?}"),
        }
    }
}
