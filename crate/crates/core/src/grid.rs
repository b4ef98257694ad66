use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform time grid `t_m = m T / M`, `m = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::invalid("horizon", "must be positive and finite"));
        }
        if steps < 2 {
            return Err(Error::invalid("steps", "need at least two steps"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.steps)
    }

    pub fn node(&self, m: usize) -> T {
        if m == self.steps {
            self.horizon
        } else {
            self.horizon * T::from_usize_lossy(m) / T::from_usize_lossy(self.steps)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..=self.steps).map(move |m| self.node(m))
    }

    /// Cell index and barycentric weight of `t` (clamped to `[0, T]`).
    pub fn locate(&self, t: T) -> (usize, T) {
        let t = t.max(T::zero()).min(self.horizon);
        let s = t / self.dt();
        let m = s.floor().to_usize().unwrap_or(0).min(self.steps - 1);
        (m, s - T::from_usize_lossy(m))
    }

    /// Piecewise-linear interpolation of nodal `values` at `t`.
    pub fn interpolate(&self, values: &[T], t: T) -> T {
        debug_assert_eq!(values.len(), self.len());
        let (m, w) = self.locate(t);
        values[m] * (T::one() - w) + values[m + 1] * w
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<T> {
        let h = self.dt();
        let half = h / T::lit(2.0);
        (0..=self.steps)
            .map(|m| if m == 0 || m == self.steps { half } else { h })
            .collect()
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.steps == other.steps && self.horizon == other.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_hit_both_endpoints() {
        let g = TimeGrid::new(2.0_f64, 8).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(8), 2.0);
        assert_eq!(g.nodes().count(), 9);
        assert!((g.trapezoid_weights().iter().sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(1.0_f64, 1).is_err());
        assert!(TimeGrid::new(0.0_f64, 10).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_linear_data() {
        let g = TimeGrid::new(1.0_f64, 4).unwrap();
        let v: Vec<f64> = g.nodes().map(|t| 3.0 * t - 1.0).collect();
        for &t in &[0.0, 0.13, 0.5, 0.99, 1.0] {
            assert!((g.interpolate(&v, t) - (3.0 * t - 1.0)).abs() < 1e-14);
        }
    }
}
