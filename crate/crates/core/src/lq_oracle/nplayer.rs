use std::io::Write;

use super::degeneracy::classify_degeneracy;
use super::degeneracy::DEVIATION_LINE;
use super::pair::{AffinePair, PairPath};
use super::{riccati_unchecked, GameMode, LqEval, LqParams, LqValue};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::Real;

/// Nodal solution of the N-player LQ game with Dirac initial positions.
///
/// Curves are indexed `[player][node]`. With `β > 0` the gains and mean paths
/// are unchanged and only `q_i` picks up the noise contributions.
#[derive(Debug, Clone)]
pub struct LqNPlayerSolution<T> {
    pub params: LqParams<T>,
    pub grid: TimeGrid<T>,
    pub riccati: Vec<T>,
    pub gain: Vec<T>,
    pub costate: Vec<Vec<T>>,
    pub offset: Vec<Vec<T>>,
    pub constant: Vec<Vec<T>>,
    pub state: Vec<Vec<T>>,
    /// `P = Σ p_i`.
    pub costate_sum: Vec<T>,
    /// `M = Σ X_i`.
    pub state_sum: Vec<T>,
    /// `Σ_i α_i(t, X_i)` at each node.
    pub control_sum: Vec<T>,
    pub mean_determinant: T,
    /// NaN when all players start at the same point and the deviation
    /// system is not solved.
    pub deviation_determinant: T,
}

/// Solves the N-player system by splitting it into the population mean and
/// the deviations from it; both are scalar pairs solved by superposition
/// shooting on the Crank–Nicolson discretisation, after which `q_i` is
/// integrated backward by the trapezoid rule.
pub fn solve_nplayer_lq<T: Real>(params: &LqParams<T>, grid: &TimeGrid<T>) -> Result<LqNPlayerSolution<T>> {
    params.validate(GameMode::NPlayer)?;
    if !grid.horizon().eq(&params.horizon) {
        return Err(Error::Shape(format!(
            "grid horizon {} differs from the game horizon {}",
            grid.horizon(),
            params.horizon
        )));
    }
    let z0 = params.initial_positions[0];
    let symmetric = params.initial_positions.iter().all(|&z| z == z0);
    let report = classify_degeneracy(params, GameMode::NPlayer);
    if report.classification == super::Degeneracy::NoQuadraticSolution {
        // On κ = (1+γ)(N−1) only the deviations lose their consistency
        // relation; a symmetric start never excites them.
        if !(symmetric && report.condition == DEVIATION_LINE) {
            return Err(Error::Degenerate(report));
        }
    }

    let n = params.n_players();
    let m = T::from_usize_lossy(n - 1);
    let z_mean = params.initial_positions.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let mean_pair = AffinePair {
        kappa: params.kappa,
        rho: params.rho,
        gamma: params.gamma,
        horizon: params.horizon,
    };
    let dev_pair = AffinePair {
        kappa: -params.kappa / m,
        rho: -params.rho / m,
        ..mean_pair
    };
    let mean = mean_pair.shoot(grid, z_mean)?;
    let dev = if symmetric {
        let zeros = vec![T::zero(); grid.len()];
        PairPath {
            costate: zeros.clone(),
            state: zeros.clone(),
            offset: zeros,
            determinant: T::nan(),
        }
    } else {
        dev_pair.shoot(grid, T::one())?
    };

    let a = params.curvature();
    let riccati: Vec<T> = grid.nodes().map(|t| riccati_unchecked(t, params)).collect();
    let gain: Vec<T> = riccati.iter().map(|&r| -r / a).collect();
    let nodes = grid.len();
    let two = T::lit(2.0);

    let mut costate = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    let mut state = Vec::with_capacity(n);
    for &z in &params.initial_positions {
        let w = z - z_mean;
        let mix = |u: &[T], v: &[T]| -> Vec<T> { u.iter().zip(v).map(|(&x, &y)| x + w * y).collect() };
        costate.push(mix(&mean.costate, &dev.costate));
        offset.push(mix(&mean.offset, &dev.offset));
        state.push(mix(&mean.state, &dev.state));
    }
    let nt = T::from_usize_lossy(n);
    let costate_sum: Vec<T> = mean.costate.iter().map(|&v| v * nt).collect();
    let state_sum: Vec<T> = mean.state.iter().map(|&v| v * nt).collect();
    let control_sum: Vec<T> = (0..nodes)
        .map(|k| (0..n).map(|i| gain[k] * state[i][k] + offset[i][k]).sum())
        .collect();

    // Others' state variance under noise, v(t) = 2β t τ(t)/(T+γ+1).
    let big = params.horizon + a;
    let variance: Vec<T> = grid
        .nodes()
        .map(|t| two * params.beta * t * params.tau(t) / big)
        .collect();

    let h2 = grid.dt() / two;
    let last = grid.steps();
    let constant = (0..n)
        .map(|i| {
            let (p, c) = (&costate[i], &offset[i]);
            let driver = |k: usize| {
                p[k] * p[k] / two
                    + a * p[k] * c[k]
                    + params.gamma * a * c[k] * c[k] / two
                    + params.beta * riccati[k]
                    + params.kappa * params.kappa * gain[k] * gain[k] * variance[k] / (two * m)
            };
            let others = (state_sum[last] - state[i][last]) / m;
            let mut q = vec![T::zero(); nodes];
            q[last] = (params.rho * others).powi(2) / two + params.rho * params.rho * variance[last] / (two * m);
            let mut f_next = driver(last);
            for k in (0..last).rev() {
                let f = driver(k);
                q[k] = q[k + 1] + h2 * (f + f_next);
                f_next = f;
            }
            q
        })
        .collect();

    Ok(LqNPlayerSolution {
        params: params.clone(),
        grid: *grid,
        riccati,
        gain,
        costate,
        offset,
        constant,
        state,
        costate_sum,
        state_sum,
        control_sum,
        mean_determinant: mean.determinant,
        deviation_determinant: dev.determinant,
    })
}

impl<T: Real> LqNPlayerSolution<T> {
    pub fn n_players(&self) -> usize {
        self.state.len()
    }

    /// Control of player `i` at node `k` along the equilibrium path.
    pub fn control(&self, player: usize, node: usize) -> T {
        self.gain[node] * self.state[player][node] + self.offset[player][node]
    }

    /// Average control of the players other than `player` at node `k`.
    pub fn others_mean_control(&self, player: usize, node: usize) -> T {
        (self.control_sum[node] - self.control(player, node)) / T::from_usize_lossy(self.n_players() - 1)
    }

    /// `max_i |p_i(T) − ϱ·mean_{j≠i} X_j(T)|` together with `|P(T) − ϱ M(T)|`.
    pub fn terminal_residuals(&self) -> (T, T) {
        let last = self.grid.steps();
        let m = T::from_usize_lossy(self.n_players() - 1);
        let rho = self.params.rho;
        let per_player = (0..self.n_players())
            .map(|i| (self.costate[i][last] - rho * (self.state_sum[last] - self.state[i][last]) / m).abs())
            .fold(T::zero(), T::max);
        let aggregate = (self.costate_sum[last] - rho * self.state_sum[last]).abs();
        (per_player, aggregate)
    }

    /// Writes `player,t,r,p,q,K,C,X` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "player,t,r,p,q,K,C,X")?;
        for i in 0..self.n_players() {
            for (k, t) in self.grid.nodes().enumerate() {
                writeln!(
                    out,
                    "{i},{t},{},{},{},{},{},{}",
                    self.riccati[k],
                    self.costate[i][k],
                    self.constant[i][k],
                    self.gain[k],
                    self.offset[i][k],
                    self.state[i][k]
                )?;
            }
        }
        Ok(())
    }
}

impl<T: Real> LqValue<T> for LqNPlayerSolution<T> {
    fn params(&self) -> &LqParams<T> {
        &self.params
    }

    fn eval(&self, player: usize, t: T, x: T) -> LqEval<T> {
        let (k, w) = self.grid.locate(t);
        let lerp = |v: &[T]| if k + 1 < v.len() { v[k] * (T::one() - w) + v[k + 1] * w } else { v[k] };
        let r = riccati_unchecked(t, &self.params);
        let p = lerp(&self.costate[player]);
        let q = lerp(&self.constant[player]);
        let c = lerp(&self.offset[player]);
        let others = |node: usize| self.others_mean_control(player, node);
        let mean_control = if k + 1 < self.grid.len() {
            others(k) * (T::one() - w) + others(k + 1) * w
        } else {
            others(k)
        };
        LqEval {
            value: r * x * x / T::lit(2.0) + p * x + q,
            gradient: r * x + p,
            feedback: -r / self.params.curvature() * x + c,
            mean_control,
        }
    }
}
