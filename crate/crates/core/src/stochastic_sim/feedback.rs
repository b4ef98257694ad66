use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fbode_solver::TrajectoryBundle;
use crate::grid::TimeGrid;
use crate::lq_oracle::{LqMfgSolution, LqNPlayerSolution};
use crate::scalar::Real;

/// A distributed control `α(t, x)` depending on time and the own state only.
pub trait Feedback<T: Real>: Send + Sync {
    fn control(&self, t: T, x: T) -> T;
}

impl<T: Real, F: Fn(T, T) -> T + Send + Sync> Feedback<T> for F {
    fn control(&self, t: T, x: T) -> T {
        self(t, x)
    }
}

/// `α(t, x) = K(t) x + C(t)` with nodal gains interpolated linearly in time.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFeedback<T> {
    pub grid: TimeGrid<T>,
    pub gain: Vec<T>,
    pub offset: Vec<T>,
}

impl<T: Real> AffineFeedback<T> {
    pub fn new(grid: TimeGrid<T>, gain: Vec<T>, offset: Vec<T>) -> Result<Self> {
        if gain.len() != grid.len() || offset.len() != grid.len() {
            return Err(Error::Shape("affine feedback curves must match the grid".into()));
        }
        Ok(Self { grid, gain, offset })
    }

    /// Affine fit `A ≈ K X + C` across the entities of a bundle at each node.
    pub fn fit(bundle: &TrajectoryBundle<T>) -> Result<Self> {
        let n = bundle.entities();
        if n < 2 {
            return Err(Error::invalid("bundle", "affine fit needs at least two entities"));
        }
        let w = T::from_usize_lossy(n);
        let mut gain = Vec::with_capacity(bundle.nodes());
        let mut offset = Vec::with_capacity(bundle.nodes());
        for m in 0..bundle.nodes() {
            let (x, a) = (bundle.node_states(m), bundle.node_controls(m));
            let mx = x.iter().copied().sum::<T>() / w;
            let ma = a.iter().copied().sum::<T>() / w;
            let (mut sxx, mut sxa) = (T::zero(), T::zero());
            for (&xi, &ai) in x.iter().zip(a) {
                sxx += (xi - mx) * (xi - mx);
                sxa += (xi - mx) * (ai - ma);
            }
            let k = if sxx > T::zero() { sxa / sxx } else { T::zero() };
            gain.push(k);
            offset.push(ma - k * mx);
        }
        Self::new(bundle.grid, gain, offset)
    }
}

impl<T: Real> Feedback<T> for AffineFeedback<T> {
    fn control(&self, t: T, x: T) -> T {
        self.grid.interpolate(&self.gain, t) * x + self.grid.interpolate(&self.offset, t)
    }
}

/// Control of the trajectory whose state is nearest to `x` at time `t`.
/// Only an approximation of the feedback field away from the trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestTrajectoryFeedback<T> {
    grid: TimeGrid<T>,
    /// `[node][k]`, sorted by state at each node, paired with controls.
    nodes: Vec<Vec<(T, T)>>,
}

impl<T: Real> NearestTrajectoryFeedback<T> {
    pub fn from_bundle(bundle: &TrajectoryBundle<T>) -> Self {
        let nodes = (0..bundle.nodes())
            .map(|m| {
                let mut v: Vec<(T, T)> = bundle
                    .node_states(m)
                    .iter()
                    .copied()
                    .zip(bundle.node_controls(m).iter().copied())
                    .collect();
                v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
                v
            })
            .collect();
        Self { grid: bundle.grid, nodes }
    }

    /// Open-loop control of a single entity.
    pub fn from_entity(bundle: &TrajectoryBundle<T>, entity: usize) -> Self {
        let nodes = (0..bundle.nodes())
            .map(|m| vec![(bundle.state(entity, m), bundle.control(entity, m))])
            .collect();
        Self { grid: bundle.grid, nodes }
    }

    fn at_node(&self, m: usize, x: T) -> T {
        let v = &self.nodes[m];
        let idx = v.partition_point(|p| p.0 < x);
        match (idx.checked_sub(1).map(|i| v[i]), v.get(idx)) {
            (Some(lo), Some(hi)) => {
                if (x - lo.0) <= (hi.0 - x) {
                    lo.1
                } else {
                    hi.1
                }
            }
            (Some(lo), None) => lo.1,
            (None, Some(hi)) => hi.1,
            (None, None) => T::zero(),
        }
    }
}

impl<T: Real> Feedback<T> for NearestTrajectoryFeedback<T> {
    fn control(&self, t: T, x: T) -> T {
        let (m, w) = self.grid.locate(t);
        self.at_node(m, x) * (T::one() - w) + self.at_node(m + 1, x) * w
    }
}

/// One feedback per player.
#[derive(Clone)]
pub struct FeedbackSet<T: Real> {
    pub feedbacks: Vec<Arc<dyn Feedback<T>>>,
}

impl<T: Real> std::fmt::Debug for FeedbackSet<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FeedbackSet({} players)", self.feedbacks.len())
    }
}

impl<T: Real> FeedbackSet<T> {
    pub fn new(feedbacks: Vec<Arc<dyn Feedback<T>>>) -> Self {
        Self { feedbacks }
    }

    pub fn len(&self) -> usize {
        self.feedbacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feedbacks.is_empty()
    }

    /// Equilibrium feedbacks `K(t) x + C_i(t)` of an N-player LQ solution.
    pub fn from_lq(sol: &LqNPlayerSolution<T>) -> Self {
        let feedbacks = (0..sol.n_players())
            .map(|i| {
                Arc::new(AffineFeedback {
                    grid: sol.grid,
                    gain: sol.gain.clone(),
                    offset: sol.offset[i].clone(),
                }) as Arc<dyn Feedback<T>>
            })
            .collect();
        Self { feedbacks }
    }

    /// The mean-field feedback `K(t) x + C(t)` shared by `n` players.
    pub fn from_mfg(sol: &LqMfgSolution<T>, grid: TimeGrid<T>, n: usize) -> Self {
        let gain = grid.nodes().map(|t| sol.gain(t)).collect();
        let offset = grid.nodes().map(|t| sol.offset(t)).collect();
        let f: Arc<dyn Feedback<T>> = Arc::new(AffineFeedback { grid, gain, offset });
        Self {
            feedbacks: vec![f; n],
        }
    }

    /// Replaces player `i`'s feedback.
    pub fn with(&self, player: usize, feedback: Arc<dyn Feedback<T>>) -> Self {
        let mut out = self.clone();
        out.feedbacks[player] = feedback;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbode_solver::BundleMode;

    #[test]
    fn affine_fit_recovers_exact_relation() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let mut b = TrajectoryBundle::zeros(BundleMode::NPlayer, g, 3);
        for m in 0..5 {
            for i in 0..3 {
                let x = i as f64 - 1.0 + 0.1 * m as f64;
                b.set(i, m, x, 0.0, -2.0 * x + m as f64);
            }
        }
        let f = AffineFeedback::fit(&b).unwrap();
        for m in 0..5 {
            assert!((f.gain[m] + 2.0).abs() < 1e-12);
            assert!((f.offset[m] - m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_trajectory_lookup() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let mut b = TrajectoryBundle::zeros(BundleMode::MeanFieldParticles, g, 3);
        for m in 0..3 {
            b.set(0, m, 0.0, 0.0, 10.0);
            b.set(1, m, 1.0, 0.0, 20.0);
            b.set(2, m, 5.0, 0.0, 30.0);
        }
        let f = NearestTrajectoryFeedback::from_bundle(&b);
        assert_eq!(f.control(0.0, -3.0), 10.0);
        assert_eq!(f.control(0.0, 0.4), 10.0);
        assert_eq!(f.control(1.0, 0.6), 20.0);
        assert_eq!(f.control(0.5, 100.0), 30.0);
    }
}
