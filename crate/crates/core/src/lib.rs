//! Equilibria of N-player differential games with interaction through
//! controls and of their mean-field limits.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the crate
//! root re-exports `f64` aliases for the common types.

pub mod error;
pub mod fbode_solver;
pub mod game_model;
pub mod grid;
pub mod lq_oracle;
pub mod metrics;
pub mod scalar;
pub mod stochastic_sim;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use scalar::Real;

pub type TimeGridF64 = TimeGrid<f64>;
pub type LqParamsF64 = lq_oracle::LqParams<f64>;
pub type LqNPlayerSolutionF64 = lq_oracle::LqNPlayerSolution<f64>;
pub type LqMfgSolutionF64 = lq_oracle::LqMfgSolution<f64>;
pub type SemimonReportF64 = lq_oracle::SemimonReport<f64>;
pub type TrajectoryBundleF64 = fbode_solver::TrajectoryBundle<f64>;
pub type SolverConfigF64 = fbode_solver::SolverConfig<f64>;
pub type SimConfigF64 = stochastic_sim::SimConfig<f64>;
pub type FeedbackSetF64 = stochastic_sim::FeedbackSet<f64>;
pub type CostEstimateF64 = stochastic_sim::CostEstimate<f64>;
pub type RateTableF64 = metrics::RateTable<f64>;
