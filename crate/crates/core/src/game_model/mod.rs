//! Cost models, the Legendre argmax `a* = −D_pH`, and the control-consistency
//! fixed points of the N-player and mean-field games.

mod audit;
mod fixed_point;
mod legendre;
mod models;

pub use audit::{gradient_audit, semimon_probe, AuditReport, DeclaredConstants, ProbeSample, ProbeStats};
pub use fixed_point::{
    consistency_fixed_point_mf, consistency_fixed_point_nplayer, Damping, FixedPointConfig, FixedPointReport,
};
pub use legendre::{hamiltonian_value, legendre_argmax, NewtonConfig};
pub use models::{LqModel, ModelParams, ModelRegistry, PotentialModel};

use crate::error::{Error, Result};
use crate::lq_oracle::GameMode;
use crate::scalar::Real;

/// States and controls of a population with cached sums.
#[derive(Debug, Clone, Copy)]
pub struct Population<'a, T> {
    positions: &'a [T],
    controls: &'a [T],
    position_sum: T,
    control_sum: T,
}

impl<'a, T: Real> Population<'a, T> {
    pub fn new(positions: &'a [T], controls: &'a [T]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty);
        }
        if controls.len() != positions.len() {
            return Err(Error::Shape(format!(
                "{} positions but {} controls",
                positions.len(),
                controls.len()
            )));
        }
        Ok(Self::unchecked(positions, controls))
    }

    /// Population seen through states only, as in terminal costs.
    pub fn states(positions: &'a [T]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self::unchecked(positions, &[]))
    }

    pub(crate) fn unchecked(positions: &'a [T], controls: &'a [T]) -> Self {
        Self {
            positions,
            controls,
            position_sum: positions.iter().copied().sum(),
            control_sum: controls.iter().copied().sum(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &'a [T] {
        self.positions
    }

    pub fn controls(&self) -> &'a [T] {
        self.controls
    }

    /// View of player `i`'s opponents.
    pub fn others(&self, player: usize) -> Context<'a, T> {
        Context::OtherPlayers {
            population: *self,
            player,
        }
    }

    /// Empirical measure of the whole population, self included.
    pub fn measure(&self) -> Context<'a, T> {
        Context::EmpiricalPairMeasure(*self)
    }

    pub fn context(&self, mode: GameMode, entity: usize) -> Context<'a, T> {
        match mode {
            GameMode::NPlayer => self.others(entity),
            GameMode::MeanField => self.measure(),
        }
    }
}

/// What a player's cost sees of the rest of the population.
#[derive(Debug, Clone, Copy)]
pub enum Context<'a, T> {
    /// `m^{N,−i}`: the other players, with weight `1/(N−1)` each.
    OtherPlayers { population: Population<'a, T>, player: usize },
    /// Empirical joint measure of all particles, self included.
    EmpiricalPairMeasure(Population<'a, T>),
    /// Only the first moments are known; [`Context::members`] is empty.
    Moments { mean_state: T, mean_control: T },
}

impl<'a, T: Real> Context<'a, T> {
    pub fn moments(mean_state: T, mean_control: T) -> Self {
        Context::Moments {
            mean_state,
            mean_control,
        }
    }

    /// Number of members the averages run over.
    pub fn len(&self) -> usize {
        match self {
            Context::OtherPlayers { population, .. } => population.len().saturating_sub(1),
            Context::EmpiricalPairMeasure(p) => p.len(),
            Context::Moments { .. } => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_state(&self) -> T {
        match *self {
            Context::OtherPlayers { population, player } => {
                let n = population.len();
                if n < 2 {
                    return T::zero();
                }
                (population.position_sum - population.positions[player]) / T::from_usize_lossy(n - 1)
            }
            Context::EmpiricalPairMeasure(p) => p.position_sum / T::from_usize_lossy(p.len()),
            Context::Moments { mean_state, .. } => mean_state,
        }
    }

    pub fn mean_control(&self) -> T {
        match *self {
            Context::OtherPlayers { population, player } => {
                let n = population.len();
                if n < 2 || population.controls.is_empty() {
                    return T::zero();
                }
                (population.control_sum - population.controls[player]) / T::from_usize_lossy(n - 1)
            }
            Context::EmpiricalPairMeasure(p) => {
                if p.controls.is_empty() {
                    return T::zero();
                }
                p.control_sum / T::from_usize_lossy(p.len())
            }
            Context::Moments { mean_control, .. } => mean_control,
        }
    }

    /// `(x_k, a_k)` of every member; controls read as zero for state-only populations.
    pub fn members(&self) -> impl Iterator<Item = (T, T)> + '_ {
        let (pop, skip) = match self {
            Context::OtherPlayers { population, player } => (Some(population), Some(*player)),
            Context::EmpiricalPairMeasure(p) => (Some(p), None),
            Context::Moments { .. } => (None, None),
        };
        let n = pop.map_or(0, |p| p.len());
        (0..n).filter(move |&k| Some(k) != skip).map(move |k| {
            let p = pop.expect("nonempty");
            (p.positions[k], p.controls.get(k).copied().unwrap_or(T::zero()))
        })
    }
}

/// Convexity, coupling and regularity bounds declared by a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMetadata<T> {
    /// Lower bound on `D²_aa L`.
    pub lambda_min: T,
    pub lambda_max: T,
    /// Bound on the sensitivity of `D_aL` to the other members' controls.
    pub coupling_norm: T,
    pub lipschitz_d_a: T,
    pub lipschitz_d_x: T,
    pub lipschitz_d_xg: T,
    /// Largest admissible `|a*|`; the Newton solve aborts beyond it.
    pub control_bound: T,
}

impl<T: Real> ModelMetadata<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > T::zero()) {
            return Err(Error::invalid("lambda_min", "must be positive"));
        }
        if self.lambda_min > self.lambda_max {
            return Err(Error::invalid("lambda_max", "must be at least lambda_min"));
        }
        if !(self.coupling_norm >= T::zero()) {
            return Err(Error::invalid("coupling_norm", "must be nonnegative"));
        }
        if !(self.control_bound > T::zero()) {
            return Err(Error::invalid("control_bound", "must be positive"));
        }
        Ok(())
    }

    /// `coupling_norm / lambda_min`; below one the consistency map contracts.
    pub fn contraction_ratio(&self) -> T {
        self.coupling_norm / self.lambda_min
    }
}

/// Running cost `L(x, a, context)` and terminal cost `g(x, context)` of a
/// representative player in dimension one. Implementations must be pure.
pub trait CostModel<T: Real>: Send + Sync {
    fn name(&self) -> &str;
    fn metadata(&self) -> ModelMetadata<T>;
    fn running(&self, x: T, a: T, ctx: &Context<'_, T>) -> T;
    fn d_a_running(&self, x: T, a: T, ctx: &Context<'_, T>) -> T;
    fn d_x_running(&self, x: T, a: T, ctx: &Context<'_, T>) -> T;
    /// Analytic `D²_aa L`, if available; finite differences are used otherwise.
    fn d_aa_running(&self, _x: T, _a: T, _ctx: &Context<'_, T>) -> Option<T> {
        None
    }
    fn terminal(&self, x: T, ctx: &Context<'_, T>) -> T;
    fn d_x_terminal(&self, x: T, ctx: &Context<'_, T>) -> T;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn other_players_exclude_self() {
        let x = [1.0, 2.0, 6.0];
        let a = [0.0, 3.0, -3.0];
        let pop = Population::new(&x, &a).unwrap();
        let ctx = pop.others(0);
        assert_eq!(ctx.len(), 2);
        assert_eq!(ctx.mean_state(), 4.0);
        assert_eq!(ctx.mean_control(), 0.0);
        assert_eq!(ctx.members().collect::<Vec<_>>(), vec![(2.0, 3.0), (6.0, -3.0)]);
    }

    #[test]
    fn measure_includes_self() {
        let x = [1.0, 2.0, 6.0];
        let a = [0.0, 3.0, 0.0];
        let ctx = Population::new(&x, &a).unwrap().measure();
        assert_eq!(ctx.len(), 3);
        assert_eq!(ctx.mean_state(), 3.0);
        assert_eq!(ctx.mean_control(), 1.0);
    }

    #[test]
    fn population_shape_checks() {
        assert!(Population::<f64>::new(&[], &[]).is_err());
        assert!(Population::new(&[1.0], &[1.0, 2.0]).is_err());
        let ctx = Population::states(&[1.0, 3.0]).unwrap().others(1);
        assert_eq!(ctx.mean_control(), 0.0);
        assert_eq!(ctx.mean_state(), 1.0);
    }
}
