//! Euler–Maruyama simulation of the N-player state equation under given
//! feedbacks, Monte Carlo cost estimation and unilateral-deviation checks.

mod deviation;
mod feedback;

pub use deviation::{
    deviation_test, standard_families, DeviationFamily, DeviationOutcome, DeviationReport, Direction, Verdict,
};
pub use feedback::{AffineFeedback, Feedback, FeedbackSet, NearestTrajectoryFeedback};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::game_model::{CostModel, Population};
use crate::grid::TimeGrid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<T> {
    pub beta: T,
    pub n_paths: usize,
    pub dt: T,
    pub seed: u64,
    /// Pairs paths `2k` and `2k+1` with opposite noise.
    pub antithetic: bool,
    /// Largest number of stored values in a [`PathEnsemble`].
    pub max_stored: usize,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::zero(),
            n_paths: 10_000,
            dt: T::lit(1e-3),
            seed: 0,
            antithetic: false,
            max_stored: 50_000_000,
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be positive"));
        }
        if !(self.beta >= T::zero()) || !self.beta.is_finite() {
            return Err(Error::invalid("beta", "must be finite and nonnegative"));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::invalid("n_paths", "must be even with antithetic pairs"));
        }
        Ok(())
    }

    /// Uniform grid on `[0, horizon]` with step at most `dt`.
    pub fn grid(&self, horizon: T) -> Result<TimeGrid<T>> {
        let steps = (horizon / self.dt).round().to_usize().unwrap_or(0).max(2);
        TimeGrid::new(horizon, steps)
    }

    fn deterministic(&self, init: &[InitialLaw<T>]) -> bool {
        self.beta == T::zero() && init.iter().all(|l| matches!(l, InitialLaw::Dirac(_)))
    }
}

/// Initial law of one player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw<T> {
    Dirac(T),
    Gaussian { mean: T, std_dev: T },
}

/// Mean of a Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub n_paths: usize,
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments<T> {
    count: usize,
    mean: T,
    m2: T,
}

impl<T: Real> Moments<T> {
    pub(crate) fn new() -> Self {
        Self {
            count: 0,
            mean: T::zero(),
            m2: T::zero(),
        }
    }

    pub(crate) fn push(&mut self, v: T) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / T::from_usize_lossy(self.count);
        self.m2 += d * (v - self.mean);
    }

    pub(crate) fn estimate(&self, n_paths: usize) -> CostEstimate<T> {
        let se = if self.count > 1 {
            (self.m2 / T::from_usize_lossy(self.count - 1) / T::from_usize_lossy(self.count)).sqrt()
        } else {
            T::zero()
        };
        CostEstimate {
            mean: self.mean,
            std_error: se,
            n_paths,
        }
    }
}

/// Standard normal increments of one path, `[node][player]`, from stream `path`.
pub fn path_noise<T: Real>(seed: u64, path: u64, players: usize, steps: usize, out: &mut Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    out.clear();
    out.extend((0..players * steps).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))));
}

fn initial_states<T: Real>(seed: u64, path: u64, init: &[InitialLaw<T>], sign: T, out: &mut [T]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(path);
    for (o, law) in out.iter_mut().zip(init) {
        *o = match *law {
            InitialLaw::Dirac(z) => z,
            InitialLaw::Gaussian { mean, std_dev } => {
                mean + sign * std_dev * T::lit(rng.sample::<f64, _>(StandardNormal))
            }
        };
    }
}

/// Simulates one joint path, calling `visit(node, states, controls)` at
/// every node including the terminal one.
pub(crate) fn run_path<T: Real>(
    feedbacks: &[&dyn Feedback<T>],
    grid: &TimeGrid<T>,
    beta: T,
    x0: &[T],
    noise: &[T],
    sign: T,
    path: usize,
    mut visit: impl FnMut(usize, &[T], &[T]),
) -> Result<()> {
    let n = feedbacks.len();
    let dt = grid.dt();
    let vol = (T::lit(2.0) * beta * dt).sqrt() * sign;
    let mut x = x0.to_vec();
    let mut a = vec![T::zero(); n];
    for m in 0..=grid.steps() {
        let t = grid.node(m);
        for i in 0..n {
            a[i] = feedbacks[i].control(t, x[i]);
        }
        visit(m, &x, &a);
        if m == grid.steps() {
            break;
        }
        for i in 0..n {
            let dw = if beta > T::zero() { vol * noise[m * n + i] } else { T::zero() };
            x[i] = x[i] + a[i] * dt + dw;
            if !x[i].is_finite() {
                return Err(Error::BlowUp { path, node: m + 1 });
            }
        }
    }
    Ok(())
}

/// Stored joint paths, `[path][node][player]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    pub grid: TimeGrid<T>,
    pub n_paths: usize,
    pub n_players: usize,
    pub antithetic: bool,
    states: Vec<T>,
    controls: Vec<T>,
}

impl<T: Real> PathEnsemble<T> {
    fn index(&self, path: usize, node: usize) -> usize {
        (path * self.grid.len() + node) * self.n_players
    }

    pub fn states(&self, path: usize, node: usize) -> &[T] {
        let k = self.index(path, node);
        &self.states[k..k + self.n_players]
    }

    pub fn controls(&self, path: usize, node: usize) -> &[T] {
        let k = self.index(path, node);
        &self.controls[k..k + self.n_players]
    }

    pub fn state(&self, path: usize, node: usize, player: usize) -> T {
        self.states(path, node)[player]
    }

    /// Terminal states of `player` over all paths.
    pub fn terminal_states(&self, player: usize) -> Vec<T> {
        (0..self.n_paths).map(|p| self.state(p, self.grid.steps(), player)).collect()
    }

    /// Writes `path,node,t,player,X,A` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path,node,t,player,X,A")?;
        for p in 0..self.n_paths {
            for (m, t) in self.grid.nodes().enumerate() {
                for i in 0..self.n_players {
                    writeln!(out, "{p},{m},{t},{i},{},{}", self.states(p, m)[i], self.controls(p, m)[i])?;
                }
            }
        }
        Ok(())
    }
}

fn check_inputs<T: Real>(feedbacks: &FeedbackSet<T>, init: &[InitialLaw<T>], config: &SimConfig<T>) -> Result<()> {
    config.validate()?;
    if feedbacks.is_empty() {
        return Err(Error::Empty);
    }
    if init.len() != feedbacks.len() {
        return Err(Error::Shape(format!(
            "{} feedbacks but {} initial laws",
            feedbacks.len(),
            init.len()
        )));
    }
    Ok(())
}

/// Euler–Maruyama `X_{m+1} = X_m + α(t_m, X_m) dt + √(2β dt) ξ` for all players.
pub fn simulate<T: Real>(
    feedbacks: &FeedbackSet<T>,
    init: &[InitialLaw<T>],
    horizon: T,
    config: &SimConfig<T>,
) -> Result<PathEnsemble<T>> {
    check_inputs(feedbacks, init, config)?;
    let grid = config.grid(horizon)?;
    let n = feedbacks.len();
    let total = config.n_paths * grid.len() * n;
    if total > config.max_stored {
        return Err(Error::invalid(
            "n_paths",
            format!("{total} stored values exceed the cap of {}", config.max_stored),
        ));
    }
    let fbs: Vec<&dyn Feedback<T>> = feedbacks.feedbacks.iter().map(|f| f.as_ref()).collect();
    let mut states = Vec::with_capacity(total);
    let mut controls = Vec::with_capacity(total);
    let mut noise = Vec::new();
    let mut x0 = vec![T::zero(); n];
    for p in 0..config.n_paths {
        let (stream, sign) = stream_of(config, p);
        path_noise(config.seed, stream, n, grid.steps(), &mut noise);
        initial_states(config.seed, stream, init, sign, &mut x0);
        run_path(&fbs, &grid, config.beta, &x0, &noise, sign, p, |_, x, a| {
            states.extend_from_slice(x);
            controls.extend_from_slice(a);
        })?;
    }
    Ok(PathEnsemble {
        grid,
        n_paths: config.n_paths,
        n_players: n,
        antithetic: config.antithetic,
        states,
        controls,
    })
}

pub(crate) fn stream_of<T: Real>(config: &SimConfig<T>, path: usize) -> (u64, T) {
    if config.antithetic {
        ((path / 2) as u64, if path % 2 == 0 { T::one() } else { -T::one() })
    } else {
        (path as u64, T::one())
    }
}

/// Trapezoid-in-time cost of `player` along one joint path.
pub(crate) struct PathCost<'m, T: Real, M: CostModel<T> + ?Sized> {
    model: &'m M,
    player: usize,
    weights: Vec<T>,
    acc: T,
}

impl<'m, T: Real, M: CostModel<T> + ?Sized> PathCost<'m, T, M> {
    pub(crate) fn new(model: &'m M, player: usize, grid: &TimeGrid<T>) -> Self {
        Self {
            model,
            player,
            weights: grid.trapezoid_weights(),
            acc: T::zero(),
        }
    }

    pub(crate) fn visit(&mut self, node: usize, x: &[T], a: &[T]) {
        let pop = Population::unchecked(x, a);
        let ctx = pop.others(self.player);
        let i = self.player;
        self.acc += self.weights[node] * self.model.running(x[i], a[i], &ctx);
        if node + 1 == self.weights.len() {
            self.acc += self.model.terminal(x[i], &ctx);
        }
    }

    pub(crate) fn take(&mut self) -> T {
        std::mem::replace(&mut self.acc, T::zero())
    }
}

/// Monte Carlo estimate of `J^i = E[∫ L dt + g]` from stored paths, with
/// the other players' terms evaluated pathwise.
pub fn estimate_cost<T: Real, M: CostModel<T> + ?Sized>(
    ensemble: &PathEnsemble<T>,
    model: &M,
    player: usize,
) -> Result<CostEstimate<T>> {
    if player >= ensemble.n_players {
        return Err(Error::Shape(format!("player {player} out of {}", ensemble.n_players)));
    }
    let mut cost = PathCost::new(model, player, &ensemble.grid);
    let mut moments = Moments::new();
    let mut pending: Option<T> = None;
    for p in 0..ensemble.n_paths {
        for m in 0..ensemble.grid.len() {
            cost.visit(m, ensemble.states(p, m), ensemble.controls(p, m));
        }
        let j = cost.take();
        if ensemble.antithetic {
            match pending.take() {
                None => pending = Some(j),
                Some(first) => moments.push((first + j) / T::lit(2.0)),
            }
        } else {
            moments.push(j);
        }
    }
    Ok(moments.estimate(ensemble.n_paths))
}

/// Costs of every player without storing paths.
pub fn estimate_costs<T: Real, M: CostModel<T> + ?Sized>(
    feedbacks: &FeedbackSet<T>,
    init: &[InitialLaw<T>],
    model: &M,
    horizon: T,
    config: &SimConfig<T>,
) -> Result<Vec<CostEstimate<T>>> {
    check_inputs(feedbacks, init, config)?;
    let grid = config.grid(horizon)?;
    let n = feedbacks.len();
    let fbs: Vec<&dyn Feedback<T>> = feedbacks.feedbacks.iter().map(|f| f.as_ref()).collect();
    let mut costs: Vec<PathCost<'_, T, M>> = (0..n).map(|i| PathCost::new(model, i, &grid)).collect();
    let mut moments = vec![Moments::new(); n];
    let paths = if config.deterministic(init) { 1 } else { config.n_paths };
    let mut noise = Vec::new();
    let mut x0 = vec![T::zero(); n];
    let mut pending: Vec<T> = vec![T::zero(); n];
    for p in 0..paths {
        let (stream, sign) = stream_of(config, p);
        path_noise(config.seed, stream, n, grid.steps(), &mut noise);
        initial_states(config.seed, stream, init, sign, &mut x0);
        run_path(&fbs, &grid, config.beta, &x0, &noise, sign, p, |m, x, a| {
            for c in costs.iter_mut() {
                c.visit(m, x, a);
            }
        })?;
        for i in 0..n {
            let j = costs[i].take();
            if config.antithetic && paths > 1 {
                if p % 2 == 0 {
                    pending[i] = j;
                } else {
                    moments[i].push((pending[i] + j) / T::lit(2.0));
                }
            } else {
                moments[i].push(j);
            }
        }
    }
    Ok(moments.iter().map(|m| m.estimate(config.n_paths)).collect())
}

/// Writes `player,J_mean,J_stderr` rows.
pub fn write_cost_summary<T: Real, W: Write>(costs: &[CostEstimate<T>], mut out: W) -> Result<()> {
    writeln!(out, "player,J_mean,J_stderr")?;
    for (i, c) in costs.iter().enumerate() {
        writeln!(out, "{i},{},{}", c.mean, c.std_error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::game_model::LqModel;
    use crate::lq_oracle::{solve_nplayer_lq, LqParams, LqValue};

    fn zero_feedback(n: usize) -> FeedbackSet<f64> {
        FeedbackSet::new(vec![Arc::new(|_t: f64, _x: f64| 0.0) as Arc<dyn Feedback<f64>>; n])
    }

    #[test]
    fn constant_path_without_noise() {
        let cfg = SimConfig {
            n_paths: 3,
            dt: 0.01,
            ..SimConfig::default()
        };
        let e = simulate(&zero_feedback(1), &[InitialLaw::Dirac(1.0)], 1.0, &cfg).unwrap();
        for p in 0..3 {
            for m in 0..e.grid.len() {
                assert_eq!(e.state(p, m, 0), 1.0);
            }
        }
    }

    #[test]
    fn brownian_terminal_variance() {
        let cfg = SimConfig {
            beta: 0.5,
            n_paths: 100_000,
            dt: 0.05,
            seed: 11,
            ..SimConfig::default()
        };
        let e = simulate(&zero_feedback(1), &[InitialLaw::Dirac(0.0)], 1.0, &cfg).unwrap();
        let xt = e.terminal_states(0);
        let n = xt.len() as f64;
        let mean = xt.iter().sum::<f64>() / n;
        let var = xt.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Var of the sample variance of a Gaussian is 2σ⁴/(n−1).
        let se = (2.0f64 / (n - 1.0)).sqrt() * 1.0;
        assert!((var - 1.0).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn seeds_are_reproducible() {
        let cfg = SimConfig {
            beta: 0.3,
            n_paths: 20,
            dt: 0.1,
            seed: 5,
            antithetic: true,
            ..SimConfig::default()
        };
        let a = simulate(&zero_feedback(2), &[InitialLaw::Dirac(0.0); 2], 1.0, &cfg).unwrap();
        let b = simulate(&zero_feedback(2), &[InitialLaw::Dirac(0.0); 2], 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        // antithetic partners mirror each other
        assert_eq!(a.state(0, 5, 1), -a.state(1, 5, 1));
    }

    /// `L = ½a²`, `g = 0`.
    struct Kinetic;

    impl CostModel<f64> for Kinetic {
        fn name(&self) -> &str {
            "kinetic"
        }
        fn metadata(&self) -> crate::game_model::ModelMetadata<f64> {
            crate::game_model::ModelMetadata {
                lambda_min: 1.0,
                lambda_max: 1.0,
                coupling_norm: 0.0,
                lipschitz_d_a: 1.0,
                lipschitz_d_x: 0.0,
                lipschitz_d_xg: 0.0,
                control_bound: 1e6,
            }
        }
        fn running(&self, _x: f64, a: f64, _ctx: &crate::game_model::Context<'_, f64>) -> f64 {
            0.5 * a * a
        }
        fn d_a_running(&self, _x: f64, a: f64, _ctx: &crate::game_model::Context<'_, f64>) -> f64 {
            a
        }
        fn d_x_running(&self, _x: f64, _a: f64, _ctx: &crate::game_model::Context<'_, f64>) -> f64 {
            0.0
        }
        fn terminal(&self, _x: f64, _ctx: &crate::game_model::Context<'_, f64>) -> f64 {
            0.0
        }
        fn d_x_terminal(&self, _x: f64, _ctx: &crate::game_model::Context<'_, f64>) -> f64 {
            0.0
        }
    }

    #[test]
    fn kinetic_cost_of_constant_controls() {
        let cfg = SimConfig {
            n_paths: 4,
            dt: 0.01,
            ..SimConfig::default()
        };
        let init = [InitialLaw::Dirac(1.0); 2];
        let zero = estimate_costs(&zero_feedback(2), &init, &Kinetic, 1.0, &cfg).unwrap();
        assert_eq!(zero[0].mean, 0.0);
        let fb = FeedbackSet::new(vec![Arc::new(|_t: f64, _x: f64| 0.7) as Arc<dyn Feedback<f64>>; 2]);
        let costs = estimate_costs(&fb, &init, &Kinetic, 1.0, &cfg).unwrap();
        assert!((costs[0].mean - 0.245).abs() < 1e-12);
        assert_eq!(costs[0].std_error, 0.0);
        let e = simulate(&fb, &init, 1.0, &cfg).unwrap();
        let stored = estimate_cost(&e, &Kinetic, 1).unwrap();
        assert!((stored.mean - 0.245).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_cost_matches_value() {
        let z = vec![0.5f64, -0.8, 1.2];
        let params = LqParams::nplayer(0.6, 0.4, 1.0, 1.0, z.clone()).unwrap();
        let sol = solve_nplayer_lq(&params, &TimeGrid::new(1.0, 1000).unwrap()).unwrap();
        let fb = FeedbackSet::from_lq(&sol);
        let init: Vec<_> = z.iter().map(|&v| InitialLaw::Dirac(v)).collect();
        let cfg = SimConfig {
            n_paths: 10,
            dt: 1e-3,
            ..SimConfig::default()
        };
        let model = LqModel::from_params(&params);
        let costs = estimate_costs(&fb, &init, &model, 1.0, &cfg).unwrap();
        for i in 0..3 {
            let w = sol.eval(i, 0.0, z[i]).value;
            assert!((costs[i].mean - w).abs() < 1e-4, "{} vs {w}", costs[i].mean);
        }
        let e = simulate(&fb, &init, 1.0, &SimConfig { n_paths: 1, ..cfg }).unwrap();
        for m in (0..=1000).step_by(100) {
            assert!((e.state(0, m, 2) - sol.state[2][m]).abs() < 1e-3);
        }
    }

    #[test]
    fn players_noise_is_independent() {
        let (players, steps, paths) = (2usize, 200usize, 200u64);
        let mut noise = Vec::new();
        let (mut sxy, mut sxx, mut syy) = (0.0f64, 0.0f64, 0.0f64);
        for p in 0..paths {
            path_noise::<f64>(3, p, players, steps, &mut noise);
            for m in 0..steps {
                let (a, b) = (noise[m * players], noise[m * players + 1]);
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() <= 4.0 / ((paths as usize * steps) as f64).sqrt());
    }
}
