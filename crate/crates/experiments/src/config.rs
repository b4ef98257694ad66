//! Experiment configuration: one schema for every experiment, read from TOML
//! or JSON and validated before any computation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    OracleCheck,
    NSweep,
    DegeneracyMap,
    ViscositySweep,
    DeviationVerify,
    StabilityProbe,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::OracleCheck,
        ExperimentId::NSweep,
        ExperimentId::DegeneracyMap,
        ExperimentId::ViscositySweep,
        ExperimentId::DeviationVerify,
        ExperimentId::StabilityProbe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::OracleCheck => "oracle-check",
            ExperimentId::NSweep => "n-sweep",
            ExperimentId::DegeneracyMap => "degeneracy-map",
            ExperimentId::ViscositySweep => "viscosity-sweep",
            ExperimentId::DeviationVerify => "deviation-verify",
            ExperimentId::StabilityProbe => "stability-probe",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| ExperimentError::config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn require(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| ExperimentError::config(format!("model parameter `{key}` is required")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub steps: usize,
    pub horizon: f64,
}

/// Initial law of the players, or explicit Dirac positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialLawSpec {
    Positions { values: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std_dev: f64 },
}

impl Default for InitialLawSpec {
    fn default() -> Self {
        InitialLawSpec::Uniform { lo: -1.0, hi: 1.0 }
    }
}

impl InitialLawSpec {
    pub fn mean(&self) -> f64 {
        match self {
            InitialLawSpec::Positions { values } => values.iter().sum::<f64>() / values.len().max(1) as f64,
            InitialLawSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            InitialLawSpec::Gaussian { mean, .. } => *mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            InitialLawSpec::Positions { values } => {
                let m = self.mean();
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len().max(1) as f64
            }
            InitialLawSpec::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            InitialLawSpec::Gaussian { std_dev, .. } => std_dev * std_dev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Sup error of the Picard solver against the closed form.
    pub oracle: f64,
    /// Accepted band for the error ratio when the step count is halved.
    pub order_ratio: [f64; 2],
    pub traj_slope: [f64; 2],
    pub value_slope: [f64; 2],
    pub grad_slope: [f64; 2],
    /// Bound on the x-dependent part of the gradient gap.
    pub grad_slope_x: f64,
    /// Relative spread of stability ratios across perturbation sizes.
    pub stability_spread: f64,
    /// Declared bound on the stability ratio.
    pub stability_bound: f64,
    pub r_squared: f64,
    /// Outer tolerance of the Picard solver.
    pub picard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            oracle: 1e-5,
            order_ratio: [3.2, 4.8],
            traj_slope: [-0.65, -0.35],
            value_slope: [-0.35, -0.15],
            grad_slope: [-0.35, -0.15],
            grad_slope_x: 1e-12,
            stability_spread: 0.01,
            stability_bound: 10.0,
            r_squared: 0.99,
            picard: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Random regular instances; zero uses the model parameters with `n_list`.
    pub random_instances: usize,
    pub max_players: usize,
    /// Particles for the mean-field comparison; zero skips it.
    pub mfg_particles: usize,
    pub max_outer: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            random_instances: 0,
            max_players: 10,
            mfg_particles: 200,
            max_outer: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Moment order used in the rate function.
    pub q: f64,
    /// Evaluation box, in multiples of the trajectory half-width.
    pub box_factor: f64,
    /// Players start off the reference law by this shift.
    pub shift: f64,
    pub bound_constant: f64,
    /// Quantile points used to evaluate the initial mismatch.
    pub reference_points: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            q: 64.0,
            box_factor: 3.0,
            shift: 0.0,
            bound_constant: 1.0,
            reference_points: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSpec {
    pub kappa: [f64; 2],
    pub kappa_count: usize,
    pub rho: [f64; 2],
    pub rho_count: usize,
    /// Mean of the initial law.
    pub mean: f64,
    pub particles: usize,
    pub attempt_steps: usize,
    pub max_outer: usize,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            kappa: [-5.5, 2.5],
            kappa_count: 41,
            rho: [-5.0, 3.0],
            rho_count: 41,
            mean: 0.0,
            particles: 8,
            attempt_steps: 50,
            max_outer: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub betas: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub antithetic: bool,
    pub epsilons: Vec<f64>,
    pub players: Vec<usize>,
    /// Offset shift of the deliberately wrong feedback.
    pub corrupt_shift: f64,
    /// Paths per deviation test in the viscosity sweep.
    pub deviation_paths: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.5],
            n_paths: 10_000,
            dt: 1e-3,
            antithetic: true,
            epsilons: vec![0.1, 0.25],
            players: vec![0],
            corrupt_shift: 0.5,
            deviation_paths: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    pub epsilons: Vec<f64>,
    /// Perturbation direction of trial 0; random directions for the rest.
    pub direction: Option<Vec<f64>>,
    pub trials: usize,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        Self {
            epsilons: vec![0.01, 0.1, 0.5],
            direction: None,
            trials: 1,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub initial_law: InitialLawSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub degeneracy: MapSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub stability: StabilitySpec,
    /// Output root; not part of the hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses TOML or JSON, chosen by extension (`.json` is JSON, anything
    /// else TOML), and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::config(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if json { Self::from_json(&text)? } else { Self::from_toml(&text)? };
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::config(msg));
        let mut numbers: Vec<(&str, f64)> = vec![("grid.horizon", self.grid.horizon)];
        numbers.extend(self.model.params.iter().map(|(k, v)| (k.as_str(), *v)));
        let t = &self.tolerances;
        numbers.extend([
            ("tolerances.oracle", t.oracle),
            ("tolerances.grad_slope_x", t.grad_slope_x),
            ("tolerances.stability_spread", t.stability_spread),
            ("tolerances.stability_bound", t.stability_bound),
            ("tolerances.r_squared", t.r_squared),
            ("tolerances.picard", t.picard),
            ("sweep.q", self.sweep.q),
            ("sweep.box_factor", self.sweep.box_factor),
            ("sweep.shift", self.sweep.shift),
            ("sweep.bound_constant", self.sweep.bound_constant),
            ("degeneracy.mean", self.degeneracy.mean),
            ("simulation.dt", self.simulation.dt),
            ("simulation.corrupt_shift", self.simulation.corrupt_shift),
        ]);
        for band in [t.order_ratio, t.traj_slope, t.value_slope, t.grad_slope, self.degeneracy.kappa, self.degeneracy.rho] {
            numbers.extend(band.iter().map(|v| ("band", *v)));
        }
        numbers.extend(self.simulation.betas.iter().map(|v| ("simulation.betas", *v)));
        numbers.extend(self.simulation.epsilons.iter().map(|v| ("simulation.epsilons", *v)));
        numbers.extend(self.stability.epsilons.iter().map(|v| ("stability.epsilons", *v)));
        if let Some(d) = &self.stability.direction {
            numbers.extend(d.iter().map(|v| ("stability.direction", *v)));
        }
        match &self.initial_law {
            InitialLawSpec::Positions { values } => numbers.extend(values.iter().map(|v| ("initial_law", *v))),
            InitialLawSpec::Uniform { lo, hi } => {
                numbers.extend([("initial_law.lo", *lo), ("initial_law.hi", *hi)]);
                if !(hi > lo) {
                    return bad("initial_law: need lo < hi".into());
                }
            }
            InitialLawSpec::Gaussian { mean, std_dev } => {
                numbers.extend([("initial_law.mean", *mean), ("initial_law.std_dev", *std_dev)]);
                if !(*std_dev > 0.0) {
                    return bad("initial_law: std_dev must be positive".into());
                }
            }
        }
        if let Some((name, v)) = numbers.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("`{name}` = {v} is not finite"));
        }
        if self.grid.steps < 2 {
            return bad("grid.steps must be at least 2".into());
        }
        if !(self.grid.horizon > 0.0) {
            return bad("grid.horizon must be positive".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if self.simulation.betas.iter().any(|b| *b < 0.0) {
            return bad("simulation.betas must be nonnegative".into());
        }
        if !(self.simulation.dt > 0.0) || self.simulation.n_paths == 0 {
            return bad("simulation needs dt > 0 and n_paths > 0".into());
        }
        if self.simulation.antithetic && self.simulation.n_paths % 2 != 0 {
            return bad("simulation.n_paths must be even with antithetic pairs".into());
        }
        match self.experiment {
            ExperimentId::NSweep => {
                if self.n_list.is_empty() {
                    return bad("n_list must be nonempty for n-sweep".into());
                }
                if self.n_list.windows(2).any(|w| w[1] <= w[0]) || self.n_list[0] < 2 {
                    return bad("n_list must be strictly increasing and start at 2 or more".into());
                }
                if self.model.name != "lq" {
                    return bad("n-sweep needs the lq model".into());
                }
            }
            ExperimentId::OracleCheck | ExperimentId::ViscositySweep | ExperimentId::DeviationVerify => {
                if self.model.name != "lq" {
                    return bad(format!("{} needs the lq model", self.experiment));
                }
            }
            ExperimentId::DegeneracyMap => {
                let d = &self.degeneracy;
                if d.kappa_count < 2 || d.rho_count < 2 || !(d.kappa[1] > d.kappa[0]) || !(d.rho[1] > d.rho[0]) {
                    return bad("degeneracy grid needs two or more points per axis and increasing ranges".into());
                }
            }
            ExperimentId::StabilityProbe => {
                if self.stability.epsilons.is_empty() || self.stability.epsilons.iter().any(|e| *e == 0.0) {
                    return bad("stability.epsilons must be nonempty and nonzero".into());
                }
            }
        }
        if self.experiment == ExperimentId::OracleCheck && self.oracle.random_instances == 0 && self.n_list.is_empty() {
            return bad("oracle-check needs n_list or oracle.random_instances".into());
        }
        Ok(())
    }
}
