use super::{GameMode, LqParams};
use crate::scalar::Real;

/// Semimonotonicity and contraction constants of the LQ costs.
///
/// In N-player mode `c_la` and `c_g` follow the published closed forms,
/// while `c_la_spectral` and `c_g_spectral` are the exact smallest
/// eigenvalues of the monotonicity operators `(D_{a^i} L^i)_i` and
/// `(D_{x^i} g^i)_i`. The two agree when the coupling weights are
/// nonnegative. The flags are computed from the spectral values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemimonReport<T> {
    pub mode: GameMode,
    pub c_la: T,
    pub c_lx: T,
    pub c_g: T,
    pub c_disp: T,
    pub c_la_spectral: T,
    pub c_g_spectral: T,
    pub c_disp_spectral: T,
    /// `1 − |κ|/(1+γ)`.
    pub contraction_margin: T,
    /// `1 + κ + γ + T(1 + ϱ)`.
    pub condition_value: T,
    pub semimonotone: bool,
    pub contractive: bool,
}

pub fn semimon_constants<T: Real>(params: &LqParams<T>, mode: GameMode) -> SemimonReport<T> {
    let one = T::one();
    let a = params.curvature();
    let (kappa, rho, horizon) = (params.kappa, params.rho, params.horizon);
    let c_lx = T::zero();
    let disp = |c_la: T, c_g: T| c_la - horizon * c_g - horizon * horizon / T::lit(2.0) * c_lx;
    let condition_value = params.condition_value();
    let contraction_margin = one - kappa.abs() / a;

    let (c_la, c_g, c_la_spectral, c_g_spectral, semimonotone) = match mode {
        GameMode::NPlayer => {
            let m = T::from_usize_lossy(params.n_players().max(2) - 1);
            let c_la = (a + (one - one / m) * kappa).min(a - kappa / m);
            let c_g = -((a + (one - one / m) * rho).min(a - rho / m));
            let c_la_s = (a + kappa).min(a - kappa / m);
            let c_g_s = -((one + rho).min(one - rho / m));
            (c_la, c_g, c_la_s, c_g_s, disp(c_la_s, c_g_s) > T::zero())
        }
        GameMode::MeanField => {
            let c_la = a.min(a + kappa);
            let c_g = -(one.min(one + rho));
            (c_la, c_g, c_la, c_g, condition_value > T::zero())
        }
    };
    SemimonReport {
        mode,
        c_la,
        c_lx,
        c_g,
        c_disp: disp(c_la, c_g),
        c_la_spectral,
        c_g_spectral,
        c_disp_spectral: disp(c_la_spectral, c_g_spectral),
        contraction_margin,
        condition_value,
        semimonotone,
        contractive: contraction_margin > T::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq_oracle::GaussianInit;

    fn mf(kappa: f64, rho: f64, gamma: f64) -> LqParams<f64> {
        LqParams::mean_field(kappa, rho, gamma, 1.0, GaussianInit { mean: 0.0, inv_width: 1.0 }).unwrap()
    }

    #[test]
    fn nplayer_three_players() {
        let p = LqParams::<f64>::nplayer(1.0, 0.0, 0.0, 1.0, vec![0.0; 3]).unwrap();
        let r = semimon_constants(&p, GameMode::NPlayer);
        assert!((r.c_la - 0.5).abs() < 1e-15);
        assert!((r.c_la_spectral - 0.5).abs() < 1e-15);
        assert_eq!(r.c_lx, 0.0);
    }

    #[test]
    fn mean_field_condition() {
        let r = semimon_constants(&mf(0.5, 0.5, 1.0), GameMode::MeanField);
        assert_eq!(r.condition_value, 4.0);
        assert!(r.semimonotone);
        assert!((r.contraction_margin - 0.75).abs() < 1e-15);
        let r = semimon_constants(&mf(-1.0, -2.0, 1.0), GameMode::MeanField);
        assert_eq!(r.condition_value, 0.0);
        assert!(!r.semimonotone);
    }

    #[test]
    fn published_and_spectral_constants_split_for_negative_coupling() {
        let p = LqParams::<f64>::nplayer(-1.0, 0.0, 0.0, 1.0, vec![0.0; 3]).unwrap();
        let r = semimon_constants(&p, GameMode::NPlayer);
        assert!((r.c_la - 0.5).abs() < 1e-15);
        assert!(r.c_la_spectral.abs() < 1e-15);
    }
}
