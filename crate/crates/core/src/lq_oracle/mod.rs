//! Closed-form and shooting solutions of the scalar linear-quadratic game.
//!
//! Running and terminal costs of player `i` are
//!
//! ```text
//! L^i(a, A^{-i}) = ½ (a + κ · mean_{j≠i} A^j)² + ½ γ a²
//! g^i(x, y^{-i}) = ½ (x + ϱ · mean_{j≠i} y^j)²
//! ```
//!
//! and the mean-field limit replaces the averages over the other players by
//! integrals against the control law `ν_t` and the state law `m_t`. Value
//! functions are quadratic, `w(t, x) = ½ r(t) x² + p(t) x + q(t)`, with the
//! common Riccati coefficient `r(t) = (γ+1)/(T+γ+1−t)`, and feedbacks are affine,
//! `α(t, x) = K(t) x + C(t)` with `K = −r/(γ+1)`.

mod degeneracy;
mod mfg;
mod nplayer;
mod pair;
mod semimon;

pub use degeneracy::{classify_degeneracy, Degeneracy, DegeneracyReport};
pub use mfg::{solve_mfg_lq, LqMfgSolution};
pub use nplayer::{solve_nplayer_lq, LqNPlayerSolution};
pub use pair::{AffinePair, PairClosedForm, PairPath};
pub use semimon::{semimon_constants, SemimonReport};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which of the two games a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameMode {
    NPlayer,
    MeanField,
}

/// Gaussian initial density `s(0)/√π · exp(−(s(0)(x−μ(0)))²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianInit<T> {
    pub mean: T,
    /// Inverse width `s(0)`; the variance is `1/(2 s(0)²)`.
    pub inv_width: T,
}

impl<T: Real> GaussianInit<T> {
    pub fn variance(&self) -> T {
        T::one() / (T::lit(2.0) * self.inv_width * self.inv_width)
    }

    pub fn std_dev(&self) -> T {
        self.variance().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqParams<T> {
    /// Control-coupling weight κ.
    pub kappa: T,
    /// Terminal-coupling weight ϱ.
    pub rho: T,
    /// Control-cost weight γ.
    pub gamma: T,
    pub horizon: T,
    /// Noise level β (the state noise is `√(2β) dB`).
    pub beta: T,
    /// Dirac initial positions `z^i`, one per player. Empty in mean-field mode.
    pub initial_positions: Vec<T>,
    pub gaussian_init: Option<GaussianInit<T>>,
}

impl<T: Real> LqParams<T> {
    pub fn nplayer(kappa: T, rho: T, gamma: T, horizon: T, positions: Vec<T>) -> Result<Self> {
        let p = Self {
            kappa,
            rho,
            gamma,
            horizon,
            beta: T::zero(),
            initial_positions: positions,
            gaussian_init: None,
        };
        p.validate(GameMode::NPlayer)?;
        Ok(p)
    }

    pub fn mean_field(kappa: T, rho: T, gamma: T, horizon: T, init: GaussianInit<T>) -> Result<Self> {
        let p = Self {
            kappa,
            rho,
            gamma,
            horizon,
            beta: T::zero(),
            initial_positions: Vec::new(),
            gaussian_init: Some(init),
        };
        p.validate(GameMode::MeanField)?;
        Ok(p)
    }

    pub fn with_beta(mut self, beta: T) -> Result<Self> {
        if !(beta >= T::zero()) || !beta.is_finite() {
            return Err(Error::invalid("beta", "must be finite and nonnegative"));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_positions(mut self, positions: Vec<T>) -> Result<Self> {
        self.initial_positions = positions;
        self.validate(GameMode::NPlayer)?;
        Ok(self)
    }

    pub fn with_gaussian_init(mut self, init: GaussianInit<T>) -> Result<Self> {
        self.gaussian_init = Some(init);
        self.validate(GameMode::MeanField)?;
        Ok(self)
    }

    pub fn n_players(&self) -> usize {
        self.initial_positions.len()
    }

    /// `λ_min = 1 + γ`, the curvature of the running cost in the own control.
    pub fn curvature(&self) -> T {
        T::one() + self.gamma
    }

    /// `1 + κ + γ + T(1 + ϱ)`: proportional to the determinant of the
    /// mean-field constant system and positive exactly when the costs are
    /// displacement semimonotone.
    pub fn condition_value(&self) -> T {
        T::one() + self.kappa + self.gamma + self.horizon * (T::one() + self.rho)
    }

    pub fn validate(&self, mode: GameMode) -> Result<()> {
        let finite = [self.kappa, self.rho, self.gamma, self.horizon, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("params", "all coefficients must be finite"));
        }
        if self.gamma < T::zero() {
            return Err(Error::invalid("gamma", "must be nonnegative"));
        }
        if !(self.horizon > T::zero()) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if self.beta < T::zero() {
            return Err(Error::invalid("beta", "must be nonnegative"));
        }
        match mode {
            GameMode::NPlayer => {
                if self.initial_positions.len() < 2 {
                    return Err(Error::invalid("initial_positions", "need at least two players"));
                }
                if self.initial_positions.iter().any(|z| !z.is_finite()) {
                    return Err(Error::invalid("initial_positions", "must be finite"));
                }
            }
            GameMode::MeanField => match self.gaussian_init {
                None => return Err(Error::invalid("gaussian_init", "required in mean-field mode")),
                Some(g) if !(g.inv_width > T::zero()) || !g.mean.is_finite() => {
                    return Err(Error::invalid("gaussian_init", "need s(0) > 0 and finite mean"));
                }
                Some(_) => {}
            },
        }
        Ok(())
    }

    /// `T + γ + 1 − t`.
    pub(crate) fn tau(&self, t: T) -> T {
        (self.horizon - t) + self.curvature()
    }
}

/// Riccati coefficient `r(t) = (γ+1)/(T+γ+1−t)` of the quadratic value functions.
pub fn riccati_r<T: Real>(t: T, params: &LqParams<T>) -> Result<T> {
    if !(t >= T::zero() && t <= params.horizon) {
        return Err(Error::Domain {
            what: "t",
            value: t.as_f64(),
            domain: format!("[0, {}]", params.horizon),
        });
    }
    Ok(params.curvature() / params.tau(t))
}

pub(crate) fn riccati_unchecked<T: Real>(t: T, params: &LqParams<T>) -> T {
    params.curvature() / params.tau(t)
}

/// Value, gradient and feedback of a quadratic value function at `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqEval<T> {
    pub value: T,
    pub gradient: T,
    pub feedback: T,
    /// Mean control of the population the player interacts with.
    pub mean_control: T,
}

impl<T: Real> LqEval<T> {
    /// `feedback + (gradient + κ·mean_control)/(γ+1)`, zero for a consistent pair.
    pub fn consistency_residual(&self, kappa: T, gamma: T) -> T {
        self.feedback + (self.gradient + kappa * self.mean_control) / (T::one() + gamma)
    }
}

/// Common evaluation interface of the N-player and mean-field solutions.
pub trait LqValue<T: Real> {
    fn params(&self) -> &LqParams<T>;
    /// `player` is ignored by the mean-field solution.
    fn eval(&self, player: usize, t: T, x: T) -> LqEval<T>;
}

pub fn eval_lq<T: Real, S: LqValue<T> + ?Sized>(sol: &S, player: usize, t: T, x: T) -> LqEval<T> {
    sol.eval(player, t, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, horizon: f64) -> LqParams<f64> {
        LqParams::nplayer(0.5, 0.0, gamma, horizon, vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn riccati_terminal_value_is_one() {
        for &(g, t) in &[(0.0, 1.0), (1.0, 1.0), (3.0, 0.25), (0.2, 5.0)] {
            let p = params(g, t);
            assert_eq!(riccati_r(t, &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn riccati_at_zero() {
        let p = params(1.0, 1.0);
        assert!((riccati_r(0.0, &p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let p = params(1e6, 1.0);
        assert!((riccati_r(0.0, &p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn riccati_rejects_outside_horizon() {
        let p = params(1.0, 1.0);
        assert!(matches!(riccati_r(1.0 + 1e-9, &p), Err(Error::Domain { .. })));
        assert!(riccati_r(-1e-9, &p).is_err());
    }

    #[test]
    fn riccati_is_increasing() {
        let p = params(0.3, 2.0);
        let mut prev = 0.0;
        for k in 0..=200 {
            let r = riccati_r(2.0 * k as f64 / 200.0, &p).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(LqParams::nplayer(1.0, 0.0, 1.0, 1.0, vec![1.0]).is_err());
        assert!(LqParams::nplayer(1.0, 0.0, -0.5, 1.0, vec![1.0, 2.0]).is_err());
        assert!(LqParams::nplayer(1.0, 0.0, 1.0, 0.0, vec![1.0, 2.0]).is_err());
        let g = GaussianInit { mean: 0.0, inv_width: 0.0 };
        assert!(LqParams::mean_field(1.0, 0.0, 1.0, 1.0, g).is_err());
        let p = params(1.0, 1.0);
        assert!(p.clone().with_beta(-1.0).is_err());
        assert_eq!(p.with_beta(0.5).unwrap().beta, 0.5);
    }
}
