//! The scalar forward-backward pair shared by the mean-field game, the
//! population mean of the N-player game, and its per-player deviations:
//!
//! ```text
//! p' = (r/c) p − κ r²/((γ+1) c) X,   p(T) = ϱ X(T)
//! X' = −p/c − (r/c) X,               X(0) = x0
//! ```
//!
//! with `c = κ + γ + 1` and offset `C = (−p + κ r X/(γ+1))/c`.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePair<T> {
    pub kappa: T,
    pub rho: T,
    pub gamma: T,
    pub horizon: T,
}

/// Nodal solution of the discretised pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPath<T> {
    pub costate: Vec<T>,
    pub state: Vec<T>,
    pub offset: Vec<T>,
    /// Determinant of the 2×2 shooting system.
    pub determinant: T,
}

/// Exact solution `X(t) = B − D̃(T+γ+1+t)`,
/// `p(t) = −B(γ+1)/τ + D̃(2(γ+1)(T+γ+1)/τ + κ)` with `τ = T+γ+1−t`.
///
/// `D̃ = D/κ` where `D` is the constant of the usual κ-scaled form; this
/// scaling stays valid at κ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairClosedForm<T> {
    pub pair: AffinePair<T>,
    pub b: T,
    pub d_scaled: T,
    /// `T + γ + 1 + κ + ϱT`.
    pub determinant: T,
}

impl<T: Real> AffinePair<T> {
    fn a(&self) -> T {
        T::one() + self.gamma
    }

    fn c(&self) -> T {
        self.kappa + self.a()
    }

    fn tau(&self, t: T) -> T {
        (self.horizon - t) + self.a()
    }

    fn r(&self, t: T) -> T {
        self.a() / self.tau(t)
    }

    pub fn offset(&self, t: T, costate: T, state: T) -> T {
        let a = self.a();
        (-costate + self.kappa * self.r(t) * state / a) / self.c()
    }

    fn matrix(&self, t: T) -> [[T; 2]; 2] {
        let (a, c, r) = (self.a(), self.c(), self.r(t));
        [
            [r / c, -self.kappa * r * r / (a * c)],
            [-T::one() / c, -r / c],
        ]
    }

    fn check(&self) -> Result<()> {
        let scale = self.kappa.abs() + self.a();
        if self.c().abs() <= T::tolerance(1e-12) * scale {
            return Err(Error::invalid("kappa", "κ + γ + 1 = 0: the consistency relation has no solution"));
        }
        Ok(())
    }

    /// Crank–Nicolson propagation of one basis solution.
    fn propagate(&self, grid: &TimeGrid<T>, y0: [T; 2]) -> (Vec<T>, Vec<T>) {
        let n = grid.len();
        let h2 = grid.dt() / T::lit(2.0);
        let mut p = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        p.push(y0[0]);
        x.push(y0[1]);
        let mut a0 = self.matrix(grid.node(0));
        for m in 0..grid.steps() {
            let a1 = self.matrix(grid.node(m + 1));
            let (pm, xm) = (p[m], x[m]);
            let rhs = [
                pm + h2 * (a0[0][0] * pm + a0[0][1] * xm),
                xm + h2 * (a0[1][0] * pm + a0[1][1] * xm),
            ];
            let l = [
                [T::one() - h2 * a1[0][0], -h2 * a1[0][1]],
                [-h2 * a1[1][0], T::one() - h2 * a1[1][1]],
            ];
            let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
            p.push((rhs[0] * l[1][1] - l[0][1] * rhs[1]) / det);
            x.push((l[0][0] * rhs[1] - l[1][0] * rhs[0]) / det);
            a0 = a1;
        }
        (p, x)
    }

    /// Two-parameter superposition shooting on the Crank–Nicolson discretisation.
    pub fn shoot(&self, grid: &TimeGrid<T>, x0: T) -> Result<PairPath<T>> {
        self.check()?;
        let (p1, x1) = self.propagate(grid, [T::one(), T::zero()]);
        let (p2, x2) = self.propagate(grid, [T::zero(), T::one()]);
        let last = grid.steps();
        // unknowns (s1, s2): initial costate and state
        // row 1: s2 = x0; row 2: terminal condition p(T) − ϱ X(T) = 0
        let m21 = p1[last] - self.rho * x1[last];
        let m22 = p2[last] - self.rho * x2[last];
        let determinant = -m21;
        let scale = p1[last].abs() + (self.rho * x1[last]).abs() + T::min_positive_value();
        if determinant.abs() <= T::tolerance(1e-12) * scale || !determinant.is_finite() {
            return Err(Error::SingularShooting {
                determinant: determinant.as_f64(),
            });
        }
        let s2 = x0;
        let s1 = -m22 * s2 / m21;
        let costate: Vec<T> = p1.iter().zip(&p2).map(|(&u, &v)| s1 * u + s2 * v).collect();
        let state: Vec<T> = x1.iter().zip(&x2).map(|(&u, &v)| s1 * u + s2 * v).collect();
        let offset = grid
            .nodes()
            .zip(costate.iter().zip(&state))
            .map(|(t, (&p, &x))| self.offset(t, p, x))
            .collect();
        Ok(PairPath {
            costate,
            state,
            offset,
            determinant,
        })
    }

    /// Constant system for `(B, D̃)`:
    /// `[[1, −(T+a)], [−(1+ϱ), 2(T+a) + ϱ(2T+a) + κ]]` with right-hand side `(x0, 0)`.
    pub fn constant_system(&self) -> [[T; 2]; 2] {
        let (a, t) = (self.a(), self.horizon);
        let two = T::lit(2.0);
        [
            [T::one(), -(t + a)],
            [-(T::one() + self.rho), two * (t + a) + self.rho * (two * t + a) + self.kappa],
        ]
    }

    pub fn closed_form(&self, x0: T) -> Result<PairClosedForm<T>> {
        self.check()?;
        let m = self.constant_system();
        let determinant = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let scale = T::one() + self.kappa.abs() + self.gamma + self.horizon * (T::one() + self.rho.abs());
        if determinant.abs() <= T::tolerance(1e-12) * scale {
            return Err(Error::SingularShooting {
                determinant: determinant.as_f64(),
            });
        }
        let b = x0 * m[1][1] / determinant;
        let d_scaled = -x0 * m[1][0] / determinant;
        Ok(PairClosedForm {
            pair: *self,
            b,
            d_scaled,
            determinant,
        })
    }
}

impl<T: Real> PairClosedForm<T> {
    fn a(&self) -> T {
        T::one() + self.pair.gamma
    }

    fn tau(&self, t: T) -> T {
        (self.pair.horizon - t) + self.a()
    }

    pub fn state(&self, t: T) -> T {
        self.b - self.d_scaled * (self.pair.horizon + self.a() + t)
    }

    pub fn costate(&self, t: T) -> T {
        let (a, tau) = (self.a(), self.tau(t));
        let big = self.pair.horizon + a;
        -self.b * a / tau + self.d_scaled * (T::lit(2.0) * a * big / tau + self.pair.kappa)
    }

    pub fn offset(&self, t: T) -> T {
        let tau = self.tau(t);
        let big = self.pair.horizon + self.a();
        self.b / tau - T::lit(2.0) * self.d_scaled * big / tau
    }

    /// Antiderivative part of `q` (without the constant `E`) for the noiseless
    /// game, i.e. a function whose derivative is `−(p²/2 + a p C + γ a C²/2)`.
    pub fn q_without_constant(&self, t: T) -> T {
        let (a, tau) = (self.a(), self.tau(t));
        let big = self.pair.horizon + a;
        let two = T::lit(2.0);
        let (b, d, k) = (self.b, self.d_scaled, self.pair.kappa);
        b * b * a / (two * tau) - two * b * d * a * big / tau + two * d * d * a * big * big / tau
            - k * k * d * d * t / two
    }
}
