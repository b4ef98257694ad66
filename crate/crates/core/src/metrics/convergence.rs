use std::io::Write;

use crate::error::{Error, Result};
use crate::fbode_solver::TrajectoryBundle;
use crate::lq_oracle::LqValue;
use crate::scalar::Real;

/// Closed-form value functions for the LQ gaps, compared on `[lo, hi]`.
pub struct LqGapInputs<'a, T: Real> {
    pub nplayer: &'a dyn LqValue<T>,
    pub mean_field: &'a dyn LqValue<T>,
    pub x_box: (T, T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceError<T> {
    pub traj_error: T,
    pub value_gap: Option<T>,
    pub grad_gap: Option<T>,
    /// Largest `|D_xw^i − D_xv|` slope in `x`; zero when the quadratic
    /// coefficients agree.
    pub grad_gap_slope: Option<T>,
}

/// Symmetric box around the states of `bundle`, `factor` times its half-width.
pub fn evaluation_box<T: Real>(bundle: &TrajectoryBundle<T>, factor: T) -> (T, T) {
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for m in 0..bundle.nodes() {
        for &x in bundle.node_states(m) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let mid = (lo + hi) / T::lit(2.0);
    let half = ((hi - lo) / T::lit(2.0)).max(T::one());
    (mid - factor * half, mid + factor * half)
}

/// `(1/N) Σ_i [sup_m |X^i − X̂^i|² + ∫|A^i − Â^i|² dt]`, the time integral by
/// the trapezoid rule, plus the LQ value and gradient gaps when given.
///
/// Both gaps are affine in `x` for LQ value functions with equal quadratic
/// coefficients, so their sup over the box is attained at its edges.
pub fn empirical_convergence_error<T: Real>(
    nplayer: &TrajectoryBundle<T>,
    mean_field: &TrajectoryBundle<T>,
    lq: Option<&LqGapInputs<'_, T>>,
) -> Result<ConvergenceError<T>> {
    if !nplayer.grid.same_as(&mean_field.grid) {
        return Err(Error::Shape("bundles use different time grids".into()));
    }
    let n = nplayer.entities();
    if n != mean_field.entities() {
        return Err(Error::Shape(format!("{n} entities against {}", mean_field.entities())));
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    let weights = nplayer.grid.trapezoid_weights();
    let mut total = T::zero();
    for i in 0..n {
        let (mut sup, mut integral) = (T::zero(), T::zero());
        for (m, w) in weights.iter().enumerate() {
            let dx = nplayer.state(i, m) - mean_field.state(i, m);
            let da = nplayer.control(i, m) - mean_field.control(i, m);
            sup = sup.max(dx * dx);
            integral += *w * da * da;
        }
        total += sup + integral;
    }
    let traj_error = total / T::from_usize_lossy(n);

    let (mut value_gap, mut grad_gap, mut grad_gap_slope) = (None, None, None);
    if let Some(g) = lq {
        let (lo, hi) = g.x_box;
        if !(hi > lo) {
            return Err(Error::invalid("x_box", "needs lo < hi"));
        }
        let (mut vg, mut gg, mut gs) = (T::zero(), T::zero(), T::zero());
        for i in 0..n {
            for t in nplayer.grid.nodes() {
                let (wl, vl) = (g.nplayer.eval(i, t, lo), g.mean_field.eval(i, t, lo));
                let (wh, vh) = (g.nplayer.eval(i, t, hi), g.mean_field.eval(i, t, hi));
                vg = vg.max((wl.value - vl.value).abs()).max((wh.value - vh.value).abs());
                let (dl, dh) = (wl.gradient - vl.gradient, wh.gradient - vh.gradient);
                gg = gg.max(dl.abs()).max(dh.abs());
                gs = gs.max(((dh - dl) / (hi - lo)).abs());
            }
        }
        value_gap = Some(vg);
        grad_gap = Some(gg);
        grad_gap_slope = Some(gs);
    }
    Ok(ConvergenceError {
        traj_error,
        value_gap,
        grad_gap,
        grad_gap_slope,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope<T: Real>(xs: &[T], ys: &[T]) -> Result<T> {
    if xs.len() != ys.len() {
        return Err(Error::Shape("slope fit needs paired samples".into()));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("points", "slope fit needs at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > T::zero()) || !v.is_finite()) {
        return Err(Error::invalid("points", "log-log fit needs positive finite values"));
    }
    let lx: Vec<T> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|v| v.ln()).collect();
    let k = T::from_usize_lossy(lx.len());
    let mx = lx.iter().copied().sum::<T>() / k;
    let my = ly.iter().copied().sum::<T>() / k;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (*x - mx) * (*y - my);
        sxx += (*x - mx) * (*x - mx);
    }
    if sxx == T::zero() {
        return Err(Error::invalid("points", "slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow<T> {
    pub n: usize,
    pub traj_error: T,
    pub value_gap: Option<T>,
    pub grad_gap: Option<T>,
    pub mismatch: T,
    pub rate: T,
    pub bound: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateSlopes<T> {
    pub traj_error: Option<T>,
    pub value_gap: Option<T>,
    pub grad_gap: Option<T>,
    pub mismatch: Option<T>,
    pub rate: Option<T>,
    pub bound: Option<T>,
}

/// Rows of a convergence sweep, strictly increasing in `N`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable<T> {
    rows: Vec<RateRow<T>>,
}

impl<T: Real> RateTable<T> {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn rows(&self) -> &[RateRow<T>] {
        &self.rows
    }

    pub fn push(&mut self, row: RateRow<T>) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.n <= last.n {
                return Err(Error::invalid("n", "rows must be strictly increasing in N"));
            }
        }
        let nonneg = |v: T| v >= T::zero();
        let ok = nonneg(row.traj_error)
            && row.value_gap.is_none_or(nonneg)
            && row.grad_gap.is_none_or(nonneg)
            && nonneg(row.mismatch)
            && nonneg(row.rate)
            && nonneg(row.bound);
        if !ok {
            return Err(Error::invalid("row", "errors must be nonnegative"));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Log-log slope of every column against `N`, discarding the smallest
    /// `N` as transient when more than two rows are present.
    pub fn slopes(&self) -> RateSlopes<T> {
        let rows = if self.rows.len() > 2 { &self.rows[1..] } else { &self.rows[..] };
        let xs: Vec<T> = rows.iter().map(|r| T::from_usize_lossy(r.n)).collect();
        let fit = |col: &dyn Fn(&RateRow<T>) -> Option<T>| -> Option<T> {
            let ys: Option<Vec<T>> = rows.iter().map(col).collect();
            loglog_slope(&xs, &ys?).ok()
        };
        RateSlopes {
            traj_error: fit(&|r| Some(r.traj_error)),
            value_gap: fit(&|r| r.value_gap),
            grad_gap: fit(&|r| r.grad_gap),
            mismatch: fit(&|r| Some(r.mismatch)),
            rate: fit(&|r| Some(r.rate)),
            bound: fit(&|r| Some(r.bound)),
        }
    }

    /// Writes `N,traj_error,value_gap,grad_gap,K_N,r_dq_N,bound` rows; absent
    /// gaps are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "N,traj_error,value_gap,grad_gap,K_N,r_dq_N,bound")?;
        let opt = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                r.traj_error,
                opt(r.value_gap),
                opt(r.grad_gap),
                r.mismatch,
                r.rate,
                r.bound
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbode_solver::BundleMode;
    use crate::grid::TimeGrid;

    fn bundle(shift: f64) -> TrajectoryBundle<f64> {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let mut b = TrajectoryBundle::zeros(BundleMode::NPlayer, g, 2);
        for m in 0..=10 {
            for i in 0..2 {
                b.set(i, m, i as f64 + 0.1 * m as f64 + shift, 0.0, 0.1 + shift);
            }
        }
        b
    }

    #[test]
    fn self_comparison_is_zero() {
        let b = bundle(0.0);
        let e = empirical_convergence_error(&b, &b, None).unwrap();
        assert_eq!(e.traj_error, 0.0);
        assert!(e.value_gap.is_none());
    }

    #[test]
    fn constant_offset() {
        let e = empirical_convergence_error(&bundle(0.0), &bundle(0.5), None).unwrap();
        assert!((e.traj_error - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slopes_drop_the_smallest_n() {
        let mut t = RateTable::new();
        for (n, e) in [(10usize, 1.0), (100, 0.1), (1000, 0.001), (10000, 0.00001)] {
            let nf = n as f64;
            t.push(RateRow {
                n,
                traj_error: e,
                value_gap: None,
                grad_gap: Some(nf.powf(-0.25)),
                mismatch: 0.0,
                rate: 1.0 / nf.sqrt(),
                bound: 2.0 / nf.sqrt(),
            })
            .unwrap();
        }
        let s = t.slopes();
        assert!((s.traj_error.unwrap() + 2.0).abs() < 1e-12);
        assert!((s.grad_gap.unwrap() + 0.25).abs() < 1e-12);
        assert!((s.rate.unwrap() + 0.5).abs() < 1e-12);
        assert!(s.value_gap.is_none() && s.mismatch.is_none());
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("N,traj_error,value_gap,grad_gap,K_N,r_dq_N,bound\n10,"));
        assert!(t
            .push(RateRow {
                n: 5,
                ..t.rows()[0]
            })
            .is_err());
    }
}
