use crate::error::{Error, Result};
use crate::scalar::Real;

fn domain(what: &'static str, value: f64, domain: &str) -> Error {
    Error::Domain {
        what,
        value,
        domain: domain.to_string(),
    }
}

/// Fournier–Guillin rate `r_{d,q}(N)` for the `W₂²` distance between an
/// empirical measure of `N` samples and a law with finite `q`-th moment.
pub fn fournier_guillin_rate<T: Real>(dim: usize, q: T, n: usize) -> Result<T> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    let qf = q.as_f64();
    if !(qf > 2.0) || !qf.is_finite() {
        return Err(domain("q", qf, "q > 2 (moment order of the initial law)"));
    }
    if qf == 4.0 {
        return Err(domain("q", qf, "q != 4"));
    }
    if dim > 2 && qf * (dim as f64 - 2.0) == dim as f64 {
        return Err(domain("q", qf, "q != d/(d-2)"));
    }
    let nf = T::from_usize_lossy(n);
    let moment_term = nf.powf(-(q - T::lit(2.0)) / q);
    let dim_term = match dim {
        1..=3 => nf.powf(T::lit(-0.5)),
        4 => nf.powf(T::lit(-0.5)) * (T::one() + nf).ln(),
        d => nf.powf(-T::lit(2.0) / T::from_usize_lossy(d)),
    };
    Ok(dim_term + moment_term)
}

/// Tail assumption on the initial law selecting the deviation term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailRegime<T> {
    /// Finite moment of order `q > 4`.
    Moment,
    /// `∫ exp(γ|x|^σ) dm₀ < ∞` with `σ ≠ 2`.
    Exponential { sigma: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationInputs<T> {
    pub epsilon: T,
    pub n: usize,
    pub dim: usize,
    pub q: T,
    pub regime: TailRegime<T>,
    /// Initial mismatch `K(N)`.
    pub mismatch: T,
    /// Abstract multiplicative constant, default 1.
    pub scale: T,
    /// Abstract exponential rate, default 1.
    pub rate: T,
}

impl<T: Real> ConcentrationInputs<T> {
    pub fn new(epsilon: T, n: usize, dim: usize, q: T, regime: TailRegime<T>) -> Self {
        Self {
            epsilon,
            n,
            dim,
            q,
            regime,
            mismatch: T::zero(),
            scale: T::one(),
            rate: T::one(),
        }
    }
}

/// Small-deviation term `a_ε(N)`.
pub fn small_deviation_term<T: Real>(epsilon: T, n: usize, dim: usize, rate: T) -> T {
    let nf = T::from_usize_lossy(n);
    let e2 = epsilon * epsilon;
    let exponent = match dim.cmp(&4) {
        std::cmp::Ordering::Less => nf * e2,
        std::cmp::Ordering::Equal => {
            let l = (T::one() + epsilon.recip()).ln();
            nf * e2 / (l * l)
        }
        std::cmp::Ordering::Greater => nf * epsilon.powf(T::from_usize_lossy(dim) / T::lit(2.0)),
    };
    (-rate * exponent).exp()
}

/// Large-deviation term `b_ε(N)` for the selected tail regime.
pub fn large_deviation_term<T: Real>(epsilon: T, n: usize, q: T, regime: TailRegime<T>, rate: T) -> Result<T> {
    let nf = T::from_usize_lossy(n);
    let two = T::lit(2.0);
    let ne = nf * epsilon;
    match regime {
        TailRegime::Moment => {
            if !(q > T::lit(4.0)) {
                return Err(domain("q", q.as_f64(), "q > 4 for the moment regime"));
            }
            if !(epsilon < T::lit(4.0)) {
                return Err(domain("epsilon", epsilon.as_f64(), "epsilon < 4 for the moment regime"));
            }
            Ok(nf * ne.powf(-(q - epsilon) / two))
        }
        TailRegime::Exponential { sigma } => {
            if sigma > two {
                let on = if epsilon > two { T::one() } else { T::zero() };
                Ok((-rate * nf * epsilon.powf(sigma / two)).exp() * on)
            } else if sigma < two && sigma > T::zero() {
                if !(epsilon < sigma) {
                    return Err(domain("epsilon", epsilon.as_f64(), "epsilon < sigma < 2"));
                }
                Ok(if epsilon <= two {
                    (-rate * ne.powf((sigma - epsilon) / two)).exp()
                } else {
                    (-rate * ne.powf(sigma / two)).exp()
                })
            } else {
                Err(domain("sigma", sigma.as_f64(), "0 < sigma, sigma != 2"))
            }
        }
    }
}

/// Shape of the tail bound on `P(sup_t W₂² > ε)`:
/// `C(ε⁻¹(K + r_{d,q}(N)) + a_ε(N)·1{ε ≤ 2} + b_ε(N))`.
pub fn concentration_bound<T: Real>(inputs: &ConcentrationInputs<T>) -> Result<T> {
    let ConcentrationInputs {
        epsilon,
        n,
        dim,
        q,
        regime,
        mismatch,
        scale,
        rate,
    } = *inputs;
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(domain("epsilon", epsilon.as_f64(), "epsilon > 0"));
    }
    if !(mismatch >= T::zero()) || !(scale > T::zero()) || !(rate > T::zero()) {
        return Err(Error::invalid("constants", "mismatch >= 0, scale > 0 and rate > 0"));
    }
    let r = fournier_guillin_rate(dim, q, n)?;
    let a = if epsilon <= T::lit(2.0) {
        small_deviation_term(epsilon, n, dim, rate)
    } else {
        T::zero()
    };
    let b = large_deviation_term(epsilon, n, q, regime, rate)?;
    Ok(scale * ((mismatch + r) / epsilon + a + b))
}
