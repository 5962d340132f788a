//! Play the worked contract many times: the planner's realized objective,
//! worker surplus, and each worker's empirical best-response curve.

use esw::estimator::{EstimatorSpec, FeatureMap, Point, TestPointDistribution};
use esw::mechanism::{EffortCurve, Worker};
use esw::noise::{GroundTruth, NoiseModel};
use esw::optimizer::{self, EtaWeights, Objective, PlanProblem, PointSet};
use esw::simulator::{empirical_best_response, estimate_objective, Environment, StrategyProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
    let problem = PlanProblem {
        workers: vec![Worker::new("a", curve), Worker::new("b", curve)],
        points: PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(0.0)]),
        estimator: EstimatorSpec::ordinary(FeatureMap::constant()),
        distribution: TestPointDistribution::point_mass(Point::scalar(0.0)),
        objective: Objective::Weighted(EtaWeights::Uniform(0.0625)),
    };
    let plan = optimizer::solve_fixed(&problem)?;
    let contract = optimizer::synthesize(&problem, &plan)?;
    let env = Environment::new(GroundTruth::new(vec![0.7]), NoiseModel::Gaussian);

    let est = estimate_objective(&contract, &env, &StrategyProfile::target(2), 100_000, 1)?;
    let (lo, hi) = est.total.interval(4.0);
    println!("objective {:.4} in [{lo:.4}, {hi:.4}] (plan {:.4})", est.total.mean, plan.objective);
    for (i, u) in est.worker_utilities.iter().enumerate() {
        println!("worker {i}: mean utility {:+.4} +/- {:.4}", u.mean, u.std_error);
    }

    // Worker a's utility across efforts, with b shirking at zero effort.
    let grid: Vec<f64> = (0..=16).map(|j| j as f64 * 0.25).collect();
    let curve = empirical_best_response(&contract, &env, 0, &StrategyProfile::fixed(&[1.0, 0.0]), &grid, 20_000, 2)?;
    let lowest = curve.utility.iter().map(|u| u.mean).fold(f64::INFINITY, f64::min);
    let highest = curve.utility[curve.argmax].mean;
    for (e, u) in curve.grid.iter().zip(&curve.utility) {
        let bar = "#".repeat((40.0 * (u.mean - lowest) / (highest - lowest)) as usize);
        println!("e = {e:4.2}  {:+.4}  {bar}", u.mean);
    }
    println!("argmax {} (confident: {})", curve.argmax_effort, curve.confident);
    Ok(())
}
