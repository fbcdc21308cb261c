//! Simulation of smoothly correlated and coalescing (Arratia) Brownian
//! flows, together with the large-deviation rate functionals, path maps,
//! variational solvers and metrics needed to check the rate predictions
//! against Monte Carlo.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod arratia;
pub mod error;
pub mod flow_sim;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod pathmaps;
pub mod rates;
pub mod real;
pub mod rng;
pub mod stats;
pub mod varmin;

pub use error::{Error, Result};
pub use real::Real;

pub type Kernel = kernels::Kernel<f64>;
pub type KernelFactors = kernels::KernelFactors<f64>;
pub type FlowPath = flow_sim::FlowPath<f64>;
pub type CoalescenceRecord = arratia::CoalescenceRecord<f64>;
pub type DiscreteMeasure = metrics::DiscreteMeasure<f64>;
pub type PiecewiseLinearPath = pathmaps::PiecewiseLinearPath<f64>;
pub type HittingSet = pathmaps::HittingSet<f64>;
pub type ForestSkeleton = pathmaps::ForestSkeleton<f64>;
pub type Forest = pathmaps::Forest<f64>;
pub type RateValue = rates::RateValue<f64>;
pub type WeightedNorm = metrics::WeightedNorm<f64>;
pub type VariationalProblem = varmin::VariationalProblem<f64>;
pub type VariationalSolution = varmin::VariationalSolution<f64>;
