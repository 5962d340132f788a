//! Error minimization under a cap on total effort (and hence on total expected
//! payment, since the contract pays each worker exactly their effort).

use serde::{Deserialize, Serialize};

use super::{
    assign_points, optimal_effort, solve_candidates, EtaWeights, Objective, OptimizeError, Plan, PlanProblem, PointSet,
    Result, SearchStrategy,
};
use crate::estimator::{build_design, variance_sensitivities, variance_term, Point};
use crate::mechanism::EffortCurve;

const CALIBRATION_ROUNDS: usize = 20;

/// Efforts minimizing `Σ h_i σ_i(e_i)²` subject to `Σ e_i ≤ budget`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetEfforts {
    pub efforts: Vec<f64>,
    /// Multiplier `μ` of the budget constraint; 0 when the budget is slack.
    pub multiplier: f64,
}

/// Solve the convex separable effort program by bisection on the multiplier.
/// Each worker's effort at multiplier `μ` is the minimizer of
/// `h_i σ_i(e)² + μ e`, which is nonincreasing in `μ`.
pub fn budget_efforts(curves: &[EffortCurve], h: &[f64], budget: f64) -> Result<BudgetEfforts> {
    let minimal: f64 = curves.iter().map(|c| c.effort_min).sum();
    if budget < minimal {
        return Err(OptimizeError::InfeasibleBudget { budget, minimal });
    }
    let at = |mu: f64| -> Vec<f64> { curves.iter().zip(h).map(|(c, &hi)| optimal_effort(hi, c, mu).effort).collect() };
    let spent = |e: &[f64]| -> f64 { e.iter().sum() };

    let slack = at(0.0);
    if spent(&slack) <= budget {
        return Ok(BudgetEfforts { efforts: slack, multiplier: 0.0 });
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while spent(&at(hi)) > budget {
        hi *= 2.0;
        doublings += 1;
        if doublings > 400 {
            return Err(OptimizeError::InfeasibleBudget { budget, minimal });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spent(&at(mid)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BudgetEfforts { efforts: at(hi), multiplier: hi })
}

fn calibration_eta(problem: &PlanProblem) -> f64 {
    match &problem.objective {
        Objective::Budget { calibration_eta, .. } => calibration_eta.unwrap_or(1.0),
        Objective::Weighted(EtaWeights::Uniform(eta)) => *eta,
        Objective::Weighted(EtaWeights::PerWorker(etas)) => etas.iter().sum::<f64>() / etas.len() as f64,
    }
}

/// Two-phase budget solve: the assignment comes from the weighted matching
/// at a calibration η (re-run at the resulting multiplier until the
/// assignment repeats), then efforts are optimal for that assignment under
/// the budget. The effort phase is exact; the assignment phase is not
/// guaranteed optimal.
pub fn solve_budget(problem: &PlanProblem, budget: f64, strategy: SearchStrategy) -> Result<Plan> {
    let mut problem = problem.clone();
    problem.objective = Objective::Budget {
        budget,
        calibration_eta: match &problem.objective {
            Objective::Budget { calibration_eta, .. } => *calibration_eta,
            _ => Some(calibration_eta(&problem)),
        },
    };
    problem.validate()?;
    let mut eta = calibration_eta(&problem);

    let points: Vec<Point> = match &problem.points {
        PointSet::Fixed(p) => p.clone(),
        PointSet::Candidates { .. } => {
            let mut weighted = problem.clone();
            weighted.objective = Objective::Weighted(EtaWeights::Uniform(eta));
            solve_candidates(&weighted, strategy)?.points()
        }
    };
    let k = points.len();
    let mut mins: Vec<f64> = problem.workers.iter().map(|w| w.curve.effort_min).collect();
    mins.sort_by(f64::total_cmp);
    let minimal: f64 = mins[..k].iter().sum();
    if budget < minimal {
        return Err(OptimizeError::InfeasibleBudget { budget, minimal });
    }

    let bundle = build_design(&problem.estimator, &points, &problem.distribution)?;
    let h = variance_sensitivities(&problem.estimator, &bundle)?;

    let mut best: Option<Plan> = None;
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for _ in 0..CALIBRATION_ROUNDS {
        let etas = vec![eta; problem.workers.len()];
        let assigned = assign_points(&problem.workers, &etas, &problem.estimator, &problem.distribution, &points)?;
        let key: Vec<usize> = assigned.assignments.iter().map(|a| a.worker).collect();
        if seen.contains(&key) {
            break;
        }
        seen.push(key);
        let Some(plan) = with_budget_efforts(&problem, assigned, &points, &h, budget)? else {
            break;
        };
        let mu = plan.budget_multiplier.unwrap_or(0.0);
        if best.as_ref().is_none_or(|b| plan.mse < b.mse) {
            best = Some(plan);
        }
        if mu <= 0.0 {
            break;
        }
        eta = mu;
    }
    if best.is_none() {
        // Calibration picked workers whose minimum efforts overrun the
        // budget; fall back to the cheapest-to-engage workers.
        let mut order: Vec<usize> = (0..problem.workers.len()).collect();
        order.sort_by(|&a, &b| problem.workers[a].curve.effort_min.total_cmp(&problem.workers[b].curve.effort_min));
        let subset: Vec<usize> = order[..k].to_vec();
        let workers: Vec<_> = subset.iter().map(|&i| problem.workers[i].clone()).collect();
        let mut assigned = assign_points(&workers, &vec![eta; k], &problem.estimator, &problem.distribution, &points)?;
        for a in &mut assigned.assignments {
            a.worker = subset[a.worker];
        }
        best = with_budget_efforts(&problem, assigned, &points, &h, budget)?;
    }
    best.ok_or(OptimizeError::InfeasibleBudget { budget, minimal })
}

fn with_budget_efforts(
    problem: &PlanProblem,
    mut plan: Plan,
    points: &[Point],
    h: &[f64],
    budget: f64,
) -> Result<Option<Plan>> {
    // Assignments are listed in point order, so h lines up with them.
    let curves: Vec<EffortCurve> = plan.assignments.iter().map(|a| problem.workers[a.worker].curve).collect();
    let solved = match budget_efforts(&curves, h, budget) {
        Ok(s) => s,
        Err(OptimizeError::InfeasibleBudget { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    for (a, e) in plan.assignments.iter_mut().zip(&solved.efforts) {
        a.effort = *e;
    }
    let bundle = build_design(&problem.estimator, points, &problem.distribution)?;
    let sigmas: Vec<f64> = curves.iter().zip(&solved.efforts).map(|(c, &e)| c.sigma(e)).collect();
    plan.mse = variance_term(&problem.estimator, &bundle, &sigmas)?;
    plan.effort_cost = plan.total_effort();
    plan.objective = plan.mse;
    plan.budget_multiplier = Some(solved.multiplier);
    plan.edge_costs = None;
    Ok(Some(plan))
}
