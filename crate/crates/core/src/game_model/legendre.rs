use super::{Context, CostModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig<T> {
    /// Target for `|p + D_aL(x, a*)|`, scaled by `1 + |p|`.
    pub tol: T,
    pub max_iters: usize,
    /// Overrides the model's coercivity bound when set.
    pub control_bound: Option<T>,
}

impl<T: Real> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::tolerance(1e-10),
            max_iters: 100,
            control_bound: None,
        }
    }
}

fn finite<T: Real>(v: T, callback: &'static str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Callback { callback })
    }
}

fn slope<T: Real, M: CostModel<T> + ?Sized>(model: &M, x: T, a: T, ctx: &Context<'_, T>) -> Result<T> {
    if let Some(d) = model.d_aa_running(x, a, ctx) {
        return finite(d, "d_aa_running");
    }
    let h = T::epsilon().cbrt() * a.abs().max(T::one());
    let up = finite(model.d_a_running(x, a + h, ctx), "d_a_running")?;
    let down = finite(model.d_a_running(x, a - h, ctx), "d_a_running")?;
    Ok((up - down) / (h + h))
}

/// Solves `p + D_aL(x, a, ctx) = 0` for the minimiser `a* = −D_pH(x, p, ctx)` by
/// damped Newton, starting from `guess` (or `−p/λ_min`).
pub fn legendre_argmax<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    x: T,
    p: T,
    ctx: &Context<'_, T>,
    guess: Option<T>,
    config: &NewtonConfig<T>,
) -> Result<T> {
    let meta = model.metadata();
    let bound = config.control_bound.unwrap_or(meta.control_bound);
    let tol = config.tol * (T::one() + p.abs());
    let residual = |a: T| finite(p + model.d_a_running(x, a, ctx), "d_a_running");

    let mut a = guess.unwrap_or(-p / meta.lambda_min);
    let mut f = residual(a)?;
    for _ in 0..config.max_iters {
        if f.abs() <= tol {
            return Ok(a);
        }
        let df = slope(model, x, a, ctx)?.max(meta.lambda_min * T::lit(1e-3));
        let step = f / df;
        let mut theta = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let trial = a - theta * step;
            let ft = residual(trial)?;
            if ft.abs() < f.abs() || ft.abs() <= tol {
                a = trial;
                f = ft;
                accepted = true;
                break;
            }
            theta = theta / T::lit(2.0);
        }
        if a.abs() > bound {
            return Err(Error::Coercivity {
                magnitude: a.abs().as_f64(),
                bound: bound.as_f64(),
            });
        }
        if !accepted {
            break;
        }
    }
    if f.abs() <= tol {
        return Ok(a);
    }
    Err(Error::NonConvergence {
        iterations: config.max_iters,
        residual: f.abs().as_f64(),
    })
}

/// `H(x, p, ctx) = −p·a* − L(x, a*, ctx)`, returned with `a*`.
pub fn hamiltonian_value<T: Real, M: CostModel<T> + ?Sized>(
    model: &M,
    x: T,
    p: T,
    ctx: &Context<'_, T>,
    config: &NewtonConfig<T>,
) -> Result<(T, T)> {
    let a = legendre_argmax(model, x, p, ctx, None, config)?;
    let l = finite(model.running(x, a, ctx), "running")?;
    Ok((-p * a - l, a))
}
