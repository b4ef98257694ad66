//! Picard solver for the deterministic PMP system: forward states, backward
//! costates, and the control-consistency fixed point at every node.

mod io;

pub use io::{read_binary, write_binary, write_csv};

use crate::error::{Error, Result};
use crate::game_model::{
    consistency_fixed_point_mf, consistency_fixed_point_nplayer, legendre_argmax, CostModel, FixedPointConfig,
    NewtonConfig, Population,
};
use crate::grid::TimeGrid;
use crate::lq_oracle::GameMode;
use crate::scalar::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BundleMode {
    NPlayer,
    MeanFieldParticles,
}

impl BundleMode {
    pub fn game_mode(self) -> GameMode {
        match self {
            BundleMode::NPlayer => GameMode::NPlayer,
            BundleMode::MeanFieldParticles => GameMode::MeanField,
        }
    }
}

/// States `X`, costates `Y` and controls `A` of every entity on a time grid,
/// stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle<T> {
    pub mode: BundleMode,
    pub grid: TimeGrid<T>,
    entities: usize,
    states: Vec<T>,
    costates: Vec<T>,
    controls: Vec<T>,
}

impl<T: Real> TrajectoryBundle<T> {
    pub fn zeros(mode: BundleMode, grid: TimeGrid<T>, entities: usize) -> Self {
        let len = entities * grid.len();
        Self {
            mode,
            grid,
            entities,
            states: vec![T::zero(); len],
            costates: vec![T::zero(); len],
            controls: vec![T::zero(); len],
        }
    }

    /// Builds a bundle from `[entity][node]` paths.
    pub fn from_paths(
        mode: BundleMode,
        grid: TimeGrid<T>,
        states: &[Vec<T>],
        costates: &[Vec<T>],
        controls: &[Vec<T>],
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut b = Self::zeros(mode, grid, n);
        for (field, src) in [(0, states), (1, costates), (2, controls)] {
            if src.len() != n || src.iter().any(|p| p.len() != grid.len()) {
                return Err(Error::Shape(format!("expected {n} paths of {} nodes", grid.len())));
            }
            for (i, path) in src.iter().enumerate() {
                for (m, &v) in path.iter().enumerate() {
                    let k = m * n + i;
                    match field {
                        0 => b.states[k] = v,
                        1 => b.costates[k] = v,
                        _ => b.controls[k] = v,
                    }
                }
            }
        }
        Ok(b)
    }

    pub fn entities(&self) -> usize {
        self.entities
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn state(&self, entity: usize, node: usize) -> T {
        self.states[node * self.entities + entity]
    }

    pub fn costate(&self, entity: usize, node: usize) -> T {
        self.costates[node * self.entities + entity]
    }

    pub fn control(&self, entity: usize, node: usize) -> T {
        self.controls[node * self.entities + entity]
    }

    pub fn set(&mut self, entity: usize, node: usize, x: T, y: T, a: T) {
        let k = node * self.entities + entity;
        self.states[k] = x;
        self.costates[k] = y;
        self.controls[k] = a;
    }

    pub fn node_states(&self, node: usize) -> &[T] {
        &self.states[node * self.entities..(node + 1) * self.entities]
    }

    pub fn node_costates(&self, node: usize) -> &[T] {
        &self.costates[node * self.entities..(node + 1) * self.entities]
    }

    pub fn node_controls(&self, node: usize) -> &[T] {
        &self.controls[node * self.entities..(node + 1) * self.entities]
    }

    pub fn state_path(&self, entity: usize) -> Vec<T> {
        (0..self.nodes()).map(|m| self.state(entity, m)).collect()
    }

    pub fn costate_path(&self, entity: usize) -> Vec<T> {
        (0..self.nodes()).map(|m| self.costate(entity, m)).collect()
    }

    pub fn control_path(&self, entity: usize) -> Vec<T> {
        (0..self.nodes()).map(|m| self.control(entity, m)).collect()
    }

    pub fn initial_states(&self) -> Vec<T> {
        self.node_states(0).to_vec()
    }

    /// Mean state across entities at every node.
    pub fn mean_state_path(&self) -> Vec<T> {
        let w = T::from_usize_lossy(self.entities);
        (0..self.nodes())
            .map(|m| self.node_states(m).iter().copied().sum::<T>() / w)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterDamping<T> {
    /// Plain Picard while successive updates shrink by more than 0.9,
    /// relaxation 0.5 otherwise, halved again whenever updates grow.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub outer_tol: T,
    pub max_outer: usize,
    pub damping: OuterDamping<T>,
    /// Inner tolerance is `outer_tol * inner_tol_ratio`.
    pub inner_tol_ratio: T,
    pub inner: FixedPointConfig<T>,
    /// Initial control field `[entity][node]`; zero when absent.
    pub warm_start: Option<Vec<Vec<T>>>,
    /// Update norm, relative to the first, that counts as divergence.
    pub divergence_factor: T,
    pub min_damping: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            outer_tol: T::tolerance(1e-8),
            max_outer: 1000,
            damping: OuterDamping::Auto,
            inner_tol_ratio: T::lit(1e-2),
            inner: FixedPointConfig::default(),
            warm_start: None,
            divergence_factor: T::lit(1e6),
            min_damping: T::lit(1.0 / 64.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub outer_iterations: usize,
    pub update_norm: T,
    pub consistency_residual: T,
    pub forward_defect: T,
    pub backward_defect: T,
    /// Ratio of the last two update norms.
    pub contraction_factor: T,
    /// Largest inner contraction estimate seen on the final sweep.
    pub inner_contraction: T,
    pub damping: T,
    pub converged: bool,
    pub update_history: Vec<T>,
}

/// Discrete defects of a bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defects<T> {
    pub forward: T,
    pub backward: T,
    pub consistency: T,
}

/// Solves the N-player system from Dirac initial positions `init`.
pub fn solve_nplayer_deterministic<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    init: &[T],
    grid: &TimeGrid<T>,
    config: &SolverConfig<T>,
) -> Result<(TrajectoryBundle<T>, SolveReport<T>)> {
    if init.len() < 2 {
        return Err(Error::invalid("init", "need at least two players"));
    }
    picard(BundleMode::NPlayer, model, init, grid, config)
}

/// Solves the particle discretisation of the mean-field system with
/// `n_particles` initial states drawn from `sampler`.
pub fn solve_mfg_particles<T, M, S>(
    model: &M,
    mut sampler: S,
    n_particles: usize,
    grid: &TimeGrid<T>,
    config: &SolverConfig<T>,
    seed: u64,
) -> Result<(TrajectoryBundle<T>, SolveReport<T>)>
where
    T: Real,
    M: CostModel<T> + ?Sized,
    S: FnMut(&mut ChaCha8Rng) -> T,
{
    if n_particles == 0 {
        return Err(Error::invalid("n_particles", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<T> = (0..n_particles).map(|_| sampler(&mut rng)).collect();
    picard(BundleMode::MeanFieldParticles, model, &init, grid, config)
}

/// Same as [`solve_mfg_particles`] with given particle positions.
pub fn solve_mfg_particles_from<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    init: &[T],
    grid: &TimeGrid<T>,
    config: &SolverConfig<T>,
) -> Result<(TrajectoryBundle<T>, SolveReport<T>)> {
    if init.is_empty() {
        return Err(Error::invalid("n_particles", "must be positive"));
    }
    picard(BundleMode::MeanFieldParticles, model, init, grid, config)
}

fn forward_pass<T: Real>(bundle: &mut TrajectoryBundle<T>, init: &[T]) {
    let n = bundle.entities;
    let h2 = bundle.grid.dt() / T::lit(2.0);
    bundle.states[..n].copy_from_slice(init);
    for m in 0..bundle.grid.steps() {
        for i in 0..n {
            let k = m * n + i;
            bundle.states[k + n] = bundle.states[k] + h2 * (bundle.controls[k] + bundle.controls[k + n]);
        }
    }
}

fn running_gradient<T: Real, M: CostModel<T> + ?Sized>(model: &M, b: &TrajectoryBundle<T>, node: usize, out: &mut [T]) {
    let mode = b.mode.game_mode();
    let pop = Population::unchecked(b.node_states(node), b.node_controls(node));
    for (i, o) in out.iter_mut().enumerate() {
        let ctx = pop.context(mode, i);
        *o = model.d_x_running(b.state(i, node), b.control(i, node), &ctx);
    }
}

fn terminal_gradient<T: Real, M: CostModel<T> + ?Sized>(model: &M, b: &TrajectoryBundle<T>, out: &mut [T]) {
    let mode = b.mode.game_mode();
    let last = b.grid.steps();
    let pop = Population::unchecked(b.node_states(last), b.node_controls(last));
    for (i, o) in out.iter_mut().enumerate() {
        *o = model.d_x_terminal(b.state(i, last), &pop.context(mode, i));
    }
}

fn backward_pass<T: Real, M: CostModel<T> + ?Sized>(model: &M, bundle: &mut TrajectoryBundle<T>) {
    let n = bundle.entities;
    let last = bundle.grid.steps();
    let h2 = bundle.grid.dt() / T::lit(2.0);
    let mut terminal = vec![T::zero(); n];
    terminal_gradient(model, bundle, &mut terminal);
    bundle.costates[last * n..].copy_from_slice(&terminal);
    let mut next = vec![T::zero(); n];
    let mut here = vec![T::zero(); n];
    running_gradient(model, bundle, last, &mut next);
    for m in (0..last).rev() {
        running_gradient(model, bundle, m, &mut here);
        for i in 0..n {
            let k = m * n + i;
            bundle.costates[k] = bundle.costates[k + n] - h2 * (here[i] + next[i]);
        }
        std::mem::swap(&mut here, &mut next);
    }
}

fn inner_config<T: Real>(config: &SolverConfig<T>) -> FixedPointConfig<T> {
    let mut inner = config.inner;
    inner.tol = (config.outer_tol * config.inner_tol_ratio).max(T::epsilon() * T::lit(64.0));
    inner.newton.tol = inner.newton.tol.min(inner.tol);
    inner
}

/// Consistent controls at every node for the current states and costates.
/// Returns the largest inner contraction estimate.
fn consistency_sweep<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    bundle: &TrajectoryBundle<T>,
    inner: &FixedPointConfig<T>,
    out: &mut [T],
) -> Result<T> {
    let n = bundle.entities;
    let mut factor = T::zero();
    for m in 0..bundle.nodes() {
        let (x, y, a) = (bundle.node_states(m), bundle.node_costates(m), bundle.node_controls(m));
        let r = match bundle.mode {
            BundleMode::NPlayer => consistency_fixed_point_nplayer(x, y, model, inner, Some(a))?,
            BundleMode::MeanFieldParticles => consistency_fixed_point_mf(x, y, model, inner, Some(a))?,
        };
        factor = factor.max(r.contraction_factor);
        out[m * n..(m + 1) * n].copy_from_slice(&r.controls);
    }
    Ok(factor)
}

fn picard<T: Real, M: CostModel<T> + ?Sized>(
    mode: BundleMode,
    model: &M,
    init: &[T],
    grid: &TimeGrid<T>,
    config: &SolverConfig<T>,
) -> Result<(TrajectoryBundle<T>, SolveReport<T>)> {
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("init", "initial states must be finite"));
    }
    model.metadata().validate()?;
    let n = init.len();
    let mut bundle = TrajectoryBundle::zeros(mode, *grid, n);
    if let Some(w) = &config.warm_start {
        if w.len() != n || w.iter().any(|p| p.len() != grid.len()) {
            return Err(Error::Shape("warm start must be [entity][node]".into()));
        }
        for (i, path) in w.iter().enumerate() {
            for (m, &a) in path.iter().enumerate() {
                bundle.controls[m * n + i] = a;
            }
        }
    }
    let inner = inner_config(config);
    let (mut theta, auto) = match config.damping {
        OuterDamping::Auto => (T::one(), true),
        OuterDamping::Fixed(t) => (t, false),
    };
    let mut proposal = vec![T::zero(); bundle.controls.len()];
    let mut history: Vec<T> = Vec::new();
    let mut growth = 0usize;
    let mut factor = T::zero();
    let mut inner_factor;

    for iteration in 1..=config.max_outer {
        forward_pass(&mut bundle, init);
        backward_pass(model, &mut bundle);
        inner_factor = consistency_sweep(model, &bundle, &inner, &mut proposal)?;
        let update = bundle
            .controls
            .iter()
            .zip(&proposal)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        if !update.is_finite() {
            return Err(Error::Divergence {
                iteration,
                update: update.as_f64(),
            });
        }
        if let Some(&prev) = history.last() {
            factor = if prev > T::zero() { update / prev } else { T::zero() };
        }
        history.push(update);
        if update <= config.outer_tol {
            bundle.controls.copy_from_slice(&proposal);
            forward_pass(&mut bundle, init);
            backward_pass(model, &mut bundle);
            let defects = residuals(&bundle, model)?;
            let report = SolveReport {
                outer_iterations: iteration,
                update_norm: update,
                consistency_residual: defects.consistency,
                forward_defect: defects.forward,
                backward_defect: defects.backward,
                contraction_factor: factor,
                inner_contraction: inner_factor,
                damping: theta,
                converged: true,
                update_history: history,
            };
            return Ok((bundle, report));
        }
        if update > config.divergence_factor * history[0] {
            return Err(Error::Divergence {
                iteration,
                update: update.as_f64(),
            });
        }
        if history.len() >= 2 {
            growth = if factor > T::one() { growth + 1 } else { 0 };
            if auto {
                if factor >= T::lit(0.9) && theta == T::one() {
                    theta = T::lit(0.5);
                } else if factor > T::one() {
                    theta = (theta / T::lit(2.0)).max(config.min_damping);
                }
            }
            if growth >= 8 && (!auto || theta <= config.min_damping) {
                return Err(Error::Divergence {
                    iteration,
                    update: update.as_f64(),
                });
            }
        }
        for (a, &b) in bundle.controls.iter_mut().zip(&proposal) {
            *a = (T::one() - theta) * *a + theta * b;
        }
    }
    Err(Error::MaxIterations {
        iterations: config.max_outer,
        update: history.last().map_or(f64::NAN, |v| v.as_f64()),
    })
}

/// Recomputes the forward and backward integration defects and the
/// consistency residual `max |Φ(X, Y) − A|` of a bundle.
pub fn residuals<T: Real, M: CostModel<T> + ?Sized>(bundle: &TrajectoryBundle<T>, model: &M) -> Result<Defects<T>> {
    let n = bundle.entities;
    let h2 = bundle.grid.dt() / T::lit(2.0);
    let last = bundle.grid.steps();
    let mut forward = T::zero();
    for m in 0..last {
        for i in 0..n {
            let d = bundle.state(i, m + 1)
                - bundle.state(i, m)
                - h2 * (bundle.control(i, m) + bundle.control(i, m + 1));
            forward = forward.max(d.abs());
        }
    }
    let mut backward = T::zero();
    let mut terminal = vec![T::zero(); n];
    terminal_gradient(model, bundle, &mut terminal);
    for (i, &g) in terminal.iter().enumerate() {
        backward = backward.max((bundle.costate(i, last) - g).abs());
    }
    let mut here = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    running_gradient(model, bundle, last, &mut next);
    for m in (0..last).rev() {
        running_gradient(model, bundle, m, &mut here);
        for i in 0..n {
            let d = bundle.costate(i, m) - bundle.costate(i, m + 1) + h2 * (here[i] + next[i]);
            backward = backward.max(d.abs());
        }
        std::mem::swap(&mut here, &mut next);
    }
    let mode = bundle.mode.game_mode();
    let newton = NewtonConfig::default();
    let mut consistency = T::zero();
    for m in 0..bundle.nodes() {
        let pop = Population::unchecked(bundle.node_states(m), bundle.node_controls(m));
        for i in 0..n {
            let ctx = pop.context(mode, i);
            let a = bundle.control(i, m);
            let best = legendre_argmax(model, bundle.state(i, m), bundle.costate(i, m), &ctx, Some(a), &newton)?;
            consistency = consistency.max((best - a).abs());
        }
    }
    Ok(Defects {
        forward,
        backward,
        consistency,
    })
}

/// Empirical stability constant `sup_t Σ_i |X^a_i − X^b_i| / Σ_i |z^a_i − z^b_i|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRatio<T> {
    pub ratio: T,
    /// Set when both initial conditions coincide and the ratio is 0/0.
    pub identical_inits: bool,
}

pub fn stability_probe<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    init_a: &[T],
    init_b: &[T],
    grid: &TimeGrid<T>,
    config: &SolverConfig<T>,
) -> Result<StabilityRatio<T>> {
    if init_a.len() != init_b.len() {
        return Err(Error::Shape("initial conditions differ in size".into()));
    }
    let denom: T = init_a.iter().zip(init_b).map(|(&a, &b)| (a - b).abs()).sum();
    let (xa, _) = solve_nplayer_deterministic(model, init_a, grid, config)?;
    let (xb, _) = solve_nplayer_deterministic(model, init_b, grid, config)?;
    let numer = (0..grid.len())
        .map(|m| {
            xa.node_states(m)
                .iter()
                .zip(xb.node_states(m))
                .map(|(&a, &b)| (a - b).abs())
                .sum::<T>()
        })
        .fold(T::zero(), T::max);
    if denom == T::zero() {
        return Ok(StabilityRatio {
            ratio: T::zero(),
            identical_inits: numer == T::zero(),
        });
    }
    Ok(StabilityRatio {
        ratio: numer / denom,
        identical_inits: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{Context, LqModel, ModelMetadata, PotentialModel};
    use crate::lq_oracle::{solve_nplayer_lq, LqParams};

    struct Free;
    impl CostModel<f64> for Free {
        fn name(&self) -> &str {
            "free"
        }
        fn metadata(&self) -> ModelMetadata<f64> {
            LqModel::new(0.0, 0.0, 0.0).unwrap().metadata()
        }
        fn running(&self, _x: f64, a: f64, _c: &Context<'_, f64>) -> f64 {
            a * a / 2.0
        }
        fn d_a_running(&self, _x: f64, a: f64, _c: &Context<'_, f64>) -> f64 {
            a
        }
        fn d_x_running(&self, _x: f64, _a: f64, _c: &Context<'_, f64>) -> f64 {
            0.0
        }
        fn terminal(&self, _x: f64, _c: &Context<'_, f64>) -> f64 {
            0.0
        }
        fn d_x_terminal(&self, _x: f64, _c: &Context<'_, f64>) -> f64 {
            0.0
        }
    }

    #[test]
    fn stationary_zero_solution() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let (b, r) = solve_nplayer_deterministic(&Free, &[0.5, -1.0, 2.0], &g, &SolverConfig::default()).unwrap();
        assert!(r.converged && r.outer_iterations <= 2);
        for m in 0..g.len() {
            for i in 0..3 {
                assert_eq!(b.control(i, m), 0.0);
                assert_eq!(b.costate(i, m), 0.0);
            }
        }
        assert_eq!(b.state(2, 50), 2.0);
        let d = residuals(&b, &Free).unwrap();
        assert_eq!((d.forward, d.backward, d.consistency), (0.0, 0.0, 0.0));
    }

    #[test]
    fn lq_matches_oracle() {
        let z = vec![0.4, -1.0, 1.3];
        let params = LqParams::<f64>::nplayer(0.6, 0.3, 0.8, 1.0, z.clone()).unwrap();
        let g = TimeGrid::new(1.0, 400).unwrap();
        let oracle = solve_nplayer_lq(&params, &g).unwrap();
        let model = LqModel::from_params(&params);
        let (b, r) = solve_nplayer_deterministic(&model, &z, &g, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        let mut err = 0.0f64;
        for i in 0..3 {
            for m in 0..g.len() {
                err = err.max((b.state(i, m) - oracle.state[i][m]).abs());
                err = err.max((b.control(i, m) - oracle.control(i, m)).abs());
                let y = oracle.riccati[m] * oracle.state[i][m] + oracle.costate[i][m];
                err = err.max((b.costate(i, m) - y).abs());
            }
        }
        assert!(err < 1e-5, "{err}");
        assert!(r.consistency_residual < 1e-8);
    }

    #[test]
    fn corrupted_bundle_shows_consistency_defect() {
        let z = vec![0.4, -1.0];
        let model = LqModel::new(0.5, 0.0, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 40).unwrap();
        let (mut b, _) = solve_nplayer_deterministic(&model, &z, &g, &SolverConfig::default()).unwrap();
        let (x, y, a) = (b.state(0, 10), b.costate(0, 10), b.control(0, 10));
        b.set(0, 10, x, y, a + 1.0);
        assert!(residuals(&b, &model).unwrap().consistency >= 0.1);
    }

    #[test]
    fn heun_is_second_order_on_nonlinear_model() {
        let model = PotentialModel::<f64>::new(1.0, 2.0, 0.5, 0.4).unwrap();
        let z = [1.5, -0.5, 0.7];
        let cfg = SolverConfig {
            outer_tol: 1e-12,
            ..SolverConfig::default()
        };
        let at = |m: usize| {
            let g = TimeGrid::new(1.0, m).unwrap();
            let (b, _) = solve_nplayer_deterministic(&model, &z, &g, &cfg).unwrap();
            (0..3).map(|i| b.state(i, m)).collect::<Vec<_>>()
        };
        let (c, f, ff) = (at(50), at(100), at(200));
        let e1 = c.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let e2 = f.iter().zip(&ff).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn stability_ratio_identical_inits() {
        let model = LqModel::new(0.5, 0.0, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 20).unwrap();
        let r = stability_probe(&model, &[1.0, 2.0], &[1.0, 2.0], &g, &SolverConfig::default()).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert!(r.identical_inits);
    }

    #[test]
    fn inner_noncontraction_near_deviation_line() {
        // N = 2, κ = γ + 1: the consistency iteration has unit spectral radius.
        let model = LqModel::new(1.0 - 1e-9, 0.0, 0.0).unwrap();
        let g = TimeGrid::new(1.0, 20).unwrap();
        let err = solve_nplayer_deterministic(&model, &[1.0, -1.0], &g, &SolverConfig::default()).unwrap_err();
        match err {
            Error::NonContraction { factor, .. } => assert!(factor > 0.99),
            other => panic!("{other:?}"),
        }
    }
}
