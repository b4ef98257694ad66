//! Wasserstein distances, empirical-measure rates and the error functionals
//! used to measure N-player to mean-field convergence.

mod convergence;
mod rates;
mod wasserstein;

pub use convergence::{
    empirical_convergence_error, evaluation_box, loglog_slope, ConvergenceError, LqGapInputs, RateRow, RateSlopes,
    RateTable,
};
pub use rates::{
    concentration_bound, fournier_guillin_rate, large_deviation_term, small_deviation_term, ConcentrationInputs,
    TailRegime,
};
pub use wasserstein::{min_cost_assignment, w2_1d, w2_exact_small};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `K(N) = (1/N) Σ_i W₂²(m₀, m^i)` on the line, from samples.
pub fn initial_mismatch<T: Real, S: AsRef<[T]>>(reference: &[T], players: &[S]) -> Result<T> {
    if players.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = T::zero();
    for s in players {
        let w = w2_1d(reference, s.as_ref())?;
        total += w * w;
    }
    Ok(total / T::from_usize_lossy(players.len()))
}

/// `K(N)` for point clouds in `R^d` of at most 64 points each.
pub fn initial_mismatch_exact<T: Real, P: AsRef<[T]>>(reference: &[P], players: &[Vec<P>]) -> Result<T> {
    if players.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = T::zero();
    for s in players {
        let w: T = w2_exact_small(reference, s)?;
        total += w * w;
    }
    Ok(total / T::from_usize_lossy(players.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatch_examples() {
        let m0 = [0.3, -0.2, 1.1];
        assert_eq!(initial_mismatch(&m0, &[m0.to_vec(), m0.to_vec()]).unwrap(), 0.0);
        assert_eq!(initial_mismatch(&[0.0], &[[1.0], [-1.0]]).unwrap(), 1.0);
        let z = [0.5, -2.0, 1.5];
        let dirac: Vec<[f64; 1]> = z.iter().map(|&v| [v]).collect();
        let expected = z.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((initial_mismatch(&[0.0], &dirac).unwrap() - expected).abs() < 1e-15);
        let pts = vec![vec![[0.0f64, 0.0]], vec![[3.0, 4.0]]];
        assert!((initial_mismatch_exact(&[[0.0f64, 0.0]], &pts).unwrap() - 12.5).abs() < 1e-12);
        assert!(matches!(initial_mismatch::<f64, [f64; 1]>(&[0.0], &[]), Err(Error::Empty)));
    }
}
