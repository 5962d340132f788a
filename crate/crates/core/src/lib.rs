//! Payment contracts for estimation with strategic workers.
//!
//! A planner wants to fit a linear-in-features model from labels bought from
//! workers. Each worker's label noise shrinks with private, costly effort.
//! The crate finds which workers to hire, where to query them, and how hard
//! they should work, then writes payments
//!
//! ```text
//! p_i = c_i − d_i (y_i − f̂₋ᵢ(x_i))²
//! ```
//!
//! that make those efforts each worker's unique dominant strategy at zero
//! expected surplus. The planner's expected error plus payments then equals
//! the best value achievable even with efforts observable.
//!
//! Modules, bottom up:
//!
//! - [`estimator`]: least-squares fits, closed-form expected error and its
//!   per-point sensitivities.
//! - [`mechanism`]: effort curves, contract synthesis and analytic
//!   verification.
//! - [`optimizer`]: worker/point/effort selection (matching, candidate
//!   search, budget constraint).
//! - [`simulator`]: Monte Carlo play of the induced game.
//! - [`scenario`], [`report`], [`cli`]: file formats and the `esw` binary.
//!
//! ```
//! use esw::estimator::{EstimatorSpec, FeatureMap, Point, TestPointDistribution};
//! use esw::mechanism::{verify_contract, EffortCurve, Worker};
//! use esw::optimizer::{self, EtaWeights, Objective, PlanProblem, PointSet};
//!
//! let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
//! let problem = PlanProblem {
//!     workers: vec![Worker::new("a", curve), Worker::new("b", curve)],
//!     points: PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(0.0)]),
//!     estimator: EstimatorSpec::ordinary(FeatureMap::constant()),
//!     distribution: TestPointDistribution::point_mass(Point::scalar(0.0)),
//!     objective: Objective::Weighted(EtaWeights::Uniform(0.0625)),
//! };
//! let plan = optimizer::solve_fixed(&problem).unwrap();
//! assert!((plan.objective - 0.375).abs() < 1e-9);
//!
//! let contract = optimizer::synthesize(&problem, &plan).unwrap();
//! assert!(verify_contract(&contract).unwrap().passed);
//! ```

pub mod cli;
pub mod estimator;
pub mod linalg;
pub mod mechanism;
pub mod noise;
pub mod optimizer;
pub mod report;
pub mod scenario;
pub mod simulator;
pub mod stats;

pub use estimator::{EstimatorSpec, FeatureMap, Point, TestPointDistribution};
pub use mechanism::{verify_contract, Contract, EffortCurve, Worker};
pub use noise::{GroundTruth, NoiseModel};
pub use optimizer::{Plan, PlanProblem};
pub use scenario::Scenario;
pub use simulator::{Environment, StrategyProfile};
pub use stats::Estimate;
