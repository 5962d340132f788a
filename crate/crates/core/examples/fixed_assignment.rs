//! More workers than query points: matching decides who is hired, where,
//! and at what effort.

use esw::estimator::{EstimatorSpec, FeatureMap, Point, TestPointDistribution};
use esw::mechanism::{EffortCurve, Worker};
use esw::optimizer::{self, EtaWeights, Objective, PlanProblem, PointSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workers = vec![
        Worker::new("careful", EffortCurve::power_decay(0.5, 1.0, 0.0, 4.0)),
        Worker::new("average", EffortCurve::power_decay(1.0, 0.7, 0.0, 4.0)),
        Worker::new("cheap", EffortCurve::exponential_decay(1.5, 0.8, 0.0, 3.0)),
        Worker::new("erratic", EffortCurve::power_decay(2.5, 0.6, 0.0, 4.0)),
    ];
    // A line fit queried at the right end, so the points carry unequal weight.
    let problem = PlanProblem {
        workers,
        points: PointSet::Fixed([0.0, 0.5, 1.0].map(Point::scalar).to_vec()),
        estimator: EstimatorSpec::ordinary(FeatureMap::polynomial(1, 1)),
        distribution: TestPointDistribution::new([0.6, 0.9].map(Point::scalar).to_vec(), vec![0.3, 0.7])?,
        objective: Objective::Weighted(EtaWeights::Uniform(0.05)),
    };

    let plan = optimizer::solve_fixed(&problem)?;
    if let Some(costs) = &plan.edge_costs {
        println!("edge costs (rows: workers, last column: not hired)");
        for (w, row) in problem.workers.iter().zip(costs) {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:8.4}")).collect();
            println!("  {:>8} {}", w.id, cells.join(" "));
        }
    }
    for a in &plan.assignments {
        println!("{:>8} -> x = {:?}, effort {:.4}", a.worker_id, a.point.coords(), a.effort);
    }
    println!("objective {:.6}", plan.objective);

    let contract = optimizer::synthesize(&problem, &plan)?;
    for t in &contract.terms {
        println!("{:>8}: c = {:.4}, d = {:.4}", t.worker.id, t.intercept, t.slope);
    }
    Ok(())
}
