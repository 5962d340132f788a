//! Two identical workers estimate a constant. Solve for efforts, write the
//! payment rule, and check it analytically, including against tampering.

use esw::estimator::{EstimatorSpec, FeatureMap, Point, TestPointDistribution};
use esw::mechanism::{verify_contract, EffortCurve, Worker};
use esw::optimizer::{self, EtaWeights, Objective, PlanProblem, PointSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // σ(e) = (1 + e)^(-1/2), so σ² = 1/(1 + e).
    let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
    let problem = PlanProblem {
        workers: vec![Worker::new("a", curve), Worker::new("b", curve)],
        points: PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(0.0)]),
        estimator: EstimatorSpec::ordinary(FeatureMap::constant()),
        distribution: TestPointDistribution::point_mass(Point::scalar(0.0)),
        objective: Objective::Weighted(EtaWeights::Uniform(0.0625)),
    };
    let plan = optimizer::solve_fixed(&problem)?;
    println!("objective {:.6} (mse {:.6} + effort cost {:.6})", plan.objective, plan.mse, plan.effort_cost);

    let contract = optimizer::synthesize(&problem, &plan)?;
    for t in &contract.terms {
        println!(
            "{}: effort {:.4}, pays {:.4} - {:.4} * (y - loo prediction)^2",
            t.worker.id, t.target_effort, t.intercept, t.slope
        );
    }

    // Reports (2, 1): each worker's leave-one-out prediction is the other report.
    println!("payments for reports (2, 1): {:?}", contract.realized_payment(&[2.0, 1.0])?);

    for (label, c) in [
        ("as synthesized", contract.clone()),
        ("slopes x1.1", contract.with_scaled_slopes(1.1)),
        ("intercepts +0.5", contract.with_shifted_intercepts(0.5)),
    ] {
        let v = verify_contract(&c)?;
        println!(
            "{label:>16}: dominant {} rational {} zero-surplus {} (best response of a: {:.4})",
            v.dominant_strategy, v.individually_rational, v.ir_tight, v.workers[0].best_responses[1]
        );
    }
    Ok(())
}
