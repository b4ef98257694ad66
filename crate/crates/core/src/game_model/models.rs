use std::collections::BTreeMap;
use std::fmt;

use super::audit::gradient_audit;
use super::{Context, CostModel, ModelMetadata};
use crate::error::{Error, Result};
use crate::lq_oracle::LqParams;
use crate::scalar::Real;

const DEFAULT_CONTROL_BOUND: f64 = 1e6;

/// `L = ½(a + κ Ā)² + ½γa²`, `g = ½(x + ϱ X̄)²` with `Ā`, `X̄` the context means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqModel<T> {
    pub kappa: T,
    pub rho: T,
    pub gamma: T,
}

impl<T: Real> LqModel<T> {
    pub fn new(kappa: T, rho: T, gamma: T) -> Result<Self> {
        if !(gamma >= T::zero()) || !kappa.is_finite() || !rho.is_finite() || !gamma.is_finite() {
            return Err(Error::invalid("lq", "need finite kappa, rho and gamma >= 0"));
        }
        Ok(Self { kappa, rho, gamma })
    }

    pub fn from_params(params: &LqParams<T>) -> Self {
        Self {
            kappa: params.kappa,
            rho: params.rho,
            gamma: params.gamma,
        }
    }
}

impl<T: Real> CostModel<T> for LqModel<T> {
    fn name(&self) -> &str {
        "lq"
    }

    fn metadata(&self) -> ModelMetadata<T> {
        let a = T::one() + self.gamma;
        ModelMetadata {
            lambda_min: a,
            lambda_max: a,
            coupling_norm: self.kappa.abs(),
            lipschitz_d_a: a + self.kappa.abs(),
            lipschitz_d_x: T::zero(),
            lipschitz_d_xg: T::one() + self.rho.abs(),
            control_bound: T::lit(DEFAULT_CONTROL_BOUND),
        }
    }

    fn running(&self, _x: T, a: T, ctx: &Context<'_, T>) -> T {
        let shifted = a + self.kappa * ctx.mean_control();
        (shifted * shifted + self.gamma * a * a) / T::lit(2.0)
    }

    fn d_a_running(&self, _x: T, a: T, ctx: &Context<'_, T>) -> T {
        (T::one() + self.gamma) * a + self.kappa * ctx.mean_control()
    }

    fn d_x_running(&self, _x: T, _a: T, _ctx: &Context<'_, T>) -> T {
        T::zero()
    }

    fn d_aa_running(&self, _x: T, _a: T, _ctx: &Context<'_, T>) -> Option<T> {
        Some(T::one() + self.gamma)
    }

    fn terminal(&self, x: T, ctx: &Context<'_, T>) -> T {
        let s = x + self.rho * ctx.mean_state();
        s * s / T::lit(2.0)
    }

    fn d_x_terminal(&self, x: T, ctx: &Context<'_, T>) -> T {
        x + self.rho * ctx.mean_state()
    }
}

/// `L = ½c a² + w(√(1+x²) − 1) + ½η(a − Ā)²`, `g = ½(x + ϱ X̄)²`.
///
/// Strictly convex in the control with curvature `c + η`; the potential has a
/// bounded, Lipschitz gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialModel<T> {
    pub control_weight: T,
    pub potential_weight: T,
    pub herding: T,
    pub rho: T,
}

impl<T: Real> PotentialModel<T> {
    pub fn new(control_weight: T, potential_weight: T, herding: T, rho: T) -> Result<Self> {
        if !(control_weight > T::zero()) {
            return Err(Error::invalid("control_weight", "must be positive"));
        }
        if !(herding >= T::zero()) {
            return Err(Error::invalid("herding", "must be nonnegative"));
        }
        if !potential_weight.is_finite() || !rho.is_finite() {
            return Err(Error::invalid("quadratic-plus-potential", "coefficients must be finite"));
        }
        Ok(Self {
            control_weight,
            potential_weight,
            herding,
            rho,
        })
    }
}

impl<T: Real> CostModel<T> for PotentialModel<T> {
    fn name(&self) -> &str {
        "quadratic-plus-potential"
    }

    fn metadata(&self) -> ModelMetadata<T> {
        let curvature = self.control_weight + self.herding;
        ModelMetadata {
            lambda_min: curvature,
            lambda_max: curvature,
            coupling_norm: self.herding,
            lipschitz_d_a: curvature + self.herding,
            lipschitz_d_x: self.potential_weight.abs(),
            lipschitz_d_xg: T::one() + self.rho.abs(),
            control_bound: T::lit(DEFAULT_CONTROL_BOUND),
        }
    }

    fn running(&self, x: T, a: T, ctx: &Context<'_, T>) -> T {
        let half = T::lit(0.5);
        let gap = a - ctx.mean_control();
        half * self.control_weight * a * a
            + self.potential_weight * ((T::one() + x * x).sqrt() - T::one())
            + half * self.herding * gap * gap
    }

    fn d_a_running(&self, _x: T, a: T, ctx: &Context<'_, T>) -> T {
        self.control_weight * a + self.herding * (a - ctx.mean_control())
    }

    fn d_x_running(&self, x: T, _a: T, _ctx: &Context<'_, T>) -> T {
        self.potential_weight * x / (T::one() + x * x).sqrt()
    }

    fn d_aa_running(&self, _x: T, _a: T, _ctx: &Context<'_, T>) -> Option<T> {
        Some(self.control_weight + self.herding)
    }

    fn terminal(&self, x: T, ctx: &Context<'_, T>) -> T {
        let s = x + self.rho * ctx.mean_state();
        s * s / T::lit(2.0)
    }

    fn d_x_terminal(&self, x: T, ctx: &Context<'_, T>) -> T {
        x + self.rho * ctx.mean_state()
    }
}

/// Named numeric model parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams(pub BTreeMap<String, f64>);

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_owned(), value);
        self
    }

    pub fn get_or(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }

    pub fn require(&self, key: &'static str) -> Result<f64> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| Error::invalid(key, "missing model parameter"))
    }
}

type Factory<T> = Box<dyn Fn(&ModelParams) -> Result<Box<dyn CostModel<T>>> + Send + Sync>;

/// Model constructors keyed by name. Building a model validates its metadata
/// and runs the gradient audit.
pub struct ModelRegistry<T: Real> {
    factories: BTreeMap<String, Factory<T>>,
    audit_points: usize,
}

impl<T: Real> fmt::Debug for ModelRegistry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("models", &self.names())
            .finish()
    }
}

impl<T: Real> Default for ModelRegistry<T> {
    fn default() -> Self {
        Self::builtin()
    }
}

impl<T: Real> ModelRegistry<T> {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
            audit_points: 100,
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("lq", |p| {
            let m = LqModel::new(
                T::lit(p.require("kappa")?),
                T::lit(p.get_or("rho", 0.0)),
                T::lit(p.get_or("gamma", 1.0)),
            )?;
            Ok(Box::new(m) as Box<dyn CostModel<T>>)
        });
        reg.register("quadratic-plus-potential", |p| {
            let m = PotentialModel::new(
                T::lit(p.get_or("control_weight", 1.0)),
                T::lit(p.get_or("potential_weight", 1.0)),
                T::lit(p.get_or("herding", 0.5)),
                T::lit(p.get_or("rho", 0.0)),
            )?;
            Ok(Box::new(m) as Box<dyn CostModel<T>>)
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&ModelParams) -> Result<Box<dyn CostModel<T>>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_owned(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, params: &ModelParams) -> Result<Box<dyn CostModel<T>>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::invalid("model", format!("unknown model {name:?}")))?;
        let model = factory(params)?;
        model.metadata().validate()?;
        let audit = gradient_audit(model.as_ref(), self.audit_points, 0x5eed)?;
        if !audit.passed {
            return Err(Error::invalid(
                "model",
                format!("{name}: gradient audit failed (max relative error {:e})", audit.max_relative_error().as_f64()),
            ));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_builtins() {
        let reg = ModelRegistry::<f64>::builtin();
        assert_eq!(reg.names(), vec!["lq", "quadratic-plus-potential"]);
        let lq = reg.build("lq", &ModelParams::new().with("kappa", 0.5)).unwrap();
        assert_eq!(lq.name(), "lq");
        assert!(reg.build("lq", &ModelParams::new()).is_err());
        assert!(reg.build("nope", &ModelParams::new()).is_err());
    }

    #[test]
    fn broken_gradient_fails_registration() {
        struct Broken;
        impl CostModel<f64> for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn metadata(&self) -> ModelMetadata<f64> {
                LqModel::new(0.0, 0.0, 0.0).unwrap().metadata()
            }
            fn running(&self, _x: f64, a: f64, _c: &Context<'_, f64>) -> f64 {
                a * a / 2.0
            }
            fn d_a_running(&self, _x: f64, a: f64, _c: &Context<'_, f64>) -> f64 {
                1.01 * a
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
        let mut reg = ModelRegistry::<f64>::empty();
        reg.register("broken", |_| Ok(Box::new(Broken) as Box<dyn CostModel<f64>>));
        assert!(reg.build("broken", &ModelParams::new()).is_err());
    }

    #[test]
    fn potential_model_rejects_bad_weights() {
        assert!(PotentialModel::new(0.0, 1.0, 0.5, 0.0).is_err());
        assert!(PotentialModel::new(1.0, 1.0, -0.5, 0.0).is_err());
    }
}
