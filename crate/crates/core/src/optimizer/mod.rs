//! The planner's problem: choose workers, their points and target efforts to
//! minimize expected squared error plus weighted total effort.
//!
//! With a separable estimator the error is `Σ h_j σ_i(e_i)²` once worker `i`
//! sits on point `j`, so each worker/point pair has an independent cost
//! `min_e h_j σ_i(e)² + η_i e` and the fixed-points problem is a min-cost
//! perfect matching (dummy zero-cost points absorb unselected workers).

mod budget;
mod hungarian;
mod search;

pub use budget::{budget_efforts, solve_budget, BudgetEfforts};
pub use hungarian::{min_cost_matching, Matching};
pub use search::{solve_candidates, SearchStrategy, EXHAUSTIVE_LIMIT, LOCAL_SEARCH_FACTOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    build_design, check_leave_one_out, variance_sensitivities, variance_term, EstimatorError, EstimatorSpec, Point,
    TestPointDistribution,
};
use crate::mechanism::{decreasing_root, Contract, EffortCurve, Engagement, MechanismError, Worker};

/// Tolerance used when a solver re-derives its own objective.
pub const OBJECTIVE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("cost matrix must be square, got {rows} rows and up to {cols} columns")]
    NonSquare { rows: usize, cols: usize },
    #[error("cost matrix contains a non-finite entry")]
    NonFiniteCost,
    #[error("no points to estimate from")]
    NoPoints,
    #[error("{points} fixed points but only {workers} workers")]
    TooFewWorkers { points: usize, workers: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("exhaustive search would visit {count} configurations, above the limit of {limit}")]
    SearchTooLarge { count: u128, limit: u128 },
    #[error("no candidate design is well-defined with one example removed")]
    NoFeasibleDesign,
    #[error("budget {budget} is below the minimal feasible budget {minimal}")]
    InfeasibleBudget { budget: f64, minimal: f64 },
    #[error("plan is inconsistent with the problem: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

pub type Result<T> = std::result::Result<T, OptimizeError>;

/// Where the workers' points come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointSet {
    /// Every point must be used by exactly one selected worker.
    Fixed(Vec<Point>),
    /// Any multiset of candidates with size in `[min_selected, max_selected]`.
    Candidates {
        points: Vec<Point>,
        max_selected: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_selected: Option<usize>,
        /// Forbid using a candidate more than once.
        #[serde(default)]
        distinct: bool,
    },
}

/// Weight of the effort (payment) term in the objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaWeights {
    Uniform(f64),
    /// One weight per worker, in worker order.
    PerWorker(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Minimize error + Σ η_i e_i.
    Weighted(EtaWeights),
    /// Minimize error subject to Σ e_i ≤ budget. The assignment is chosen by
    /// matching at a calibration weight (default 1).
    Budget { budget: f64, calibration_eta: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanProblem {
    pub workers: Vec<Worker>,
    pub points: PointSet,
    pub estimator: EstimatorSpec,
    pub distribution: TestPointDistribution,
    pub objective: Objective,
}

impl PlanProblem {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.distribution.validate()?;
        if self.workers.is_empty() {
            return Err(OptimizeError::InvalidProblem("no workers".into()));
        }
        for (a, w) in self.workers.iter().enumerate() {
            w.curve.validate()?;
            if self.workers[..a].iter().any(|o| o.id == w.id) {
                return Err(OptimizeError::InvalidProblem(format!("duplicate worker id {}", w.id)));
            }
        }
        match &self.objective {
            Objective::Weighted(EtaWeights::Uniform(eta)) => check_eta(*eta)?,
            Objective::Weighted(EtaWeights::PerWorker(etas)) => {
                if etas.len() != self.workers.len() {
                    return Err(OptimizeError::InvalidProblem(format!(
                        "{} per-worker etas for {} workers",
                        etas.len(),
                        self.workers.len()
                    )));
                }
                etas.iter().try_for_each(|e| check_eta(*e))?;
            }
            Objective::Budget { budget, calibration_eta } => {
                if !(budget.is_finite() && *budget > 0.0) {
                    return Err(OptimizeError::InvalidProblem("budget must be positive".into()));
                }
                if let Some(eta) = calibration_eta {
                    check_eta(*eta)?;
                }
            }
        }
        match &self.points {
            PointSet::Fixed(points) => {
                if points.is_empty() {
                    return Err(OptimizeError::NoPoints);
                }
                if points.len() > self.workers.len() {
                    return Err(OptimizeError::TooFewWorkers { points: points.len(), workers: self.workers.len() });
                }
            }
            PointSet::Candidates { points, max_selected, min_selected, .. } => {
                if points.is_empty() || *max_selected == 0 {
                    return Err(OptimizeError::NoPoints);
                }
                if min_selected.is_some_and(|m| m > *max_selected) {
                    return Err(OptimizeError::InvalidProblem("min_selected exceeds max_selected".into()));
                }
            }
        }
        Ok(())
    }

    /// Effort weight of worker `i`; 1 in budget mode, where the payment term
    /// is the raw total.
    pub fn eta(&self, i: usize) -> f64 {
        match &self.objective {
            Objective::Weighted(EtaWeights::Uniform(eta)) => *eta,
            Objective::Weighted(EtaWeights::PerWorker(etas)) => etas[i],
            Objective::Budget { .. } => 1.0,
        }
    }

    fn weighted_etas(&self) -> Vec<f64> {
        (0..self.workers.len()).map(|i| self.eta(i)).collect()
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(OptimizeError::InvalidProblem(format!("eta must be positive, got {eta}")))
    }
}

/// One selected worker in a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Index into the problem's worker list.
    pub worker: usize,
    pub worker_id: String,
    pub point: Point,
    pub effort: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub assignments: Vec<Assignment>,
    /// Expected squared error (variance term for ridge).
    pub mse: f64,
    /// Σ η_i e_i, or Σ e_i in budget mode.
    pub effort_cost: f64,
    /// mse + effort_cost in weighted mode, mse in budget mode.
    pub objective: f64,
    /// Worker × (points + dummies) costs when matching was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_costs: Option<Vec<Vec<f64>>>,
    /// Produced by a heuristic search rather than an exact solver.
    #[serde(default)]
    pub heuristic: bool,
    /// Lagrange multiplier of the budget constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_multiplier: Option<f64>,
    /// Objective after each accepted local-search step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub search_trace: Vec<f64>,
}

impl Plan {
    pub fn points(&self) -> Vec<Point> {
        self.assignments.iter().map(|a| a.point.clone()).collect()
    }

    pub fn efforts(&self) -> Vec<f64> {
        self.assignments.iter().map(|a| a.effort).collect()
    }

    pub fn total_effort(&self) -> f64 {
        self.assignments.iter().map(|a| a.effort).sum()
    }
}

/// Minimizer of `h σ(e)² + η e` over the curve's effort interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffortChoice {
    pub effort: f64,
    pub cost: f64,
}

/// The objective is convex in `e` (`σ²` is convex), so the sign change of its
/// derivative `h (σ²)′(e) + η` is bisected; ties resolve to smaller efforts.
pub fn optimal_effort(h: f64, curve: &EffortCurve, eta: f64) -> EffortChoice {
    let marginal_gain = |e: f64| -(h * curve.variance_slope(e) + eta);
    let effort = decreasing_root(marginal_gain, curve.effort_min, curve.effort_max);
    EffortChoice { effort, cost: h * curve.variance(effort) + eta * effort }
}

/// Worker × column cost matrix; columns past `h.len()` are zero-cost dummies.
/// Also returns the optimal effort behind each real cell.
pub(crate) fn cost_matrix(workers: &[Worker], h: &[f64], etas: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = workers.len();
    let mut costs = vec![vec![0.0; n]; n];
    let mut efforts = vec![vec![0.0; h.len()]; n];
    for (i, w) in workers.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            let choice = optimal_effort(hj, &w.curve, etas[i]);
            costs[i][j] = choice.cost;
            efforts[i][j] = choice.effort;
        }
    }
    (costs, efforts)
}

/// Edge costs of the fixed-points problem.
pub fn edge_costs(problem: &PlanProblem) -> Result<Vec<Vec<f64>>> {
    let PointSet::Fixed(points) = &problem.points else {
        return Err(OptimizeError::InvalidProblem("edge costs need fixed points".into()));
    };
    problem.validate()?;
    let bundle = build_design(&problem.estimator, points, &problem.distribution)?;
    let h = variance_sensitivities(&problem.estimator, &bundle)?;
    Ok(cost_matrix(&problem.workers, &h, &problem.weighted_etas()).0)
}

/// Optimal selection, assignment and efforts for a given list of points,
/// each used exactly once. Shared by the fixed and candidate solvers.
pub(crate) fn assign_points(
    workers: &[Worker],
    etas: &[f64],
    spec: &EstimatorSpec,
    dist: &TestPointDistribution,
    points: &[Point],
) -> Result<Plan> {
    if points.is_empty() {
        return Err(OptimizeError::NoPoints);
    }
    if points.len() > workers.len() {
        return Err(OptimizeError::TooFewWorkers { points: points.len(), workers: workers.len() });
    }
    let bundle = build_design(spec, points, dist)?;
    let h = variance_sensitivities(spec, &bundle)?;
    let (costs, efforts) = cost_matrix(workers, &h, etas);
    let matching = min_cost_matching(&costs)?;

    let mut by_point: Vec<Option<Assignment>> = vec![None; points.len()];
    for (i, &j) in matching.row_to_col.iter().enumerate() {
        if j < points.len() {
            by_point[j] = Some(Assignment {
                worker: i,
                worker_id: workers[i].id.clone(),
                point: points[j].clone(),
                effort: efforts[i][j],
            });
        }
    }
    let assignments: Vec<Assignment> = by_point.into_iter().map(|a| a.expect("perfect matching")).collect();
    let effort_cost: f64 = assignments.iter().map(|a| etas[a.worker] * a.effort).sum();
    let sigmas: Vec<f64> = assignments.iter().map(|a| workers[a.worker].curve.sigma(a.effort)).collect();
    let mse = variance_term(spec, &bundle, &sigmas)?;
    let objective = mse + effort_cost;
    if (objective - matching.total).abs() > OBJECTIVE_TOLERANCE * (1.0 + objective.abs()) {
        return Err(OptimizeError::Inconsistent(format!(
            "matching total {} differs from recomputed objective {objective}",
            matching.total
        )));
    }
    Ok(Plan {
        assignments,
        mse,
        effort_cost,
        objective,
        edge_costs: Some(costs),
        heuristic: false,
        budget_multiplier: None,
        search_trace: Vec::new(),
    })
}

/// Exact optimum over worker selection, assignment of the fixed points and
/// efforts.
pub fn solve_fixed(problem: &PlanProblem) -> Result<Plan> {
    problem.validate()?;
    let PointSet::Fixed(points) = &problem.points else {
        return Err(OptimizeError::InvalidProblem("solve_fixed needs fixed points".into()));
    };
    if matches!(problem.objective, Objective::Budget { .. }) {
        return Err(OptimizeError::InvalidProblem("use solve_budget for budget objectives".into()));
    }
    let plan =
        assign_points(&problem.workers, &problem.weighted_etas(), &problem.estimator, &problem.distribution, points)?;
    let check = objective_value(&plan, problem)?;
    debug_assert!((check.total - plan.objective).abs() <= OBJECTIVE_TOLERANCE * (1.0 + check.total.abs()));
    Ok(plan)
}

/// Solve whichever variant the problem describes.
pub fn solve(problem: &PlanProblem, strategy: SearchStrategy) -> Result<Plan> {
    match (&problem.objective, &problem.points) {
        (Objective::Budget { budget, .. }, _) => solve_budget(problem, *budget, strategy),
        (_, PointSet::Fixed(_)) => solve_fixed(problem),
        (_, PointSet::Candidates { .. }) => solve_candidates(problem, strategy),
    }
}

/// Objective components recomputed from scratch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub mse: f64,
    pub effort_cost: f64,
    pub total: f64,
}

/// Recompute a plan's objective from estimator primitives, checking that it
/// is consistent with the problem.
pub fn objective_value(plan: &Plan, problem: &PlanProblem) -> Result<ObjectiveBreakdown> {
    if plan.assignments.is_empty() {
        return Err(OptimizeError::Inconsistent("plan selects no workers".into()));
    }
    let mut seen = vec![false; problem.workers.len()];
    for a in &plan.assignments {
        let w = problem
            .workers
            .get(a.worker)
            .ok_or_else(|| OptimizeError::Inconsistent(format!("worker index {} out of range", a.worker)))?;
        if w.id != a.worker_id {
            return Err(OptimizeError::Inconsistent(format!(
                "worker {} is {}, plan says {}",
                a.worker, w.id, a.worker_id
            )));
        }
        if std::mem::replace(&mut seen[a.worker], true) {
            return Err(OptimizeError::Inconsistent(format!("worker {} assigned twice", w.id)));
        }
        if !w.curve.contains(a.effort) {
            return Err(OptimizeError::Inconsistent(format!("effort {} of {} outside its interval", a.effort, w.id)));
        }
    }
    let points = plan.points();
    if let PointSet::Fixed(fixed) = &problem.points {
        if !same_multiset(&points, fixed) {
            return Err(OptimizeError::Inconsistent("assigned points differ from the fixed points".into()));
        }
    }
    let bundle = build_design(&problem.estimator, &points, &problem.distribution)?;
    let sigmas: Vec<f64> = plan.assignments.iter().map(|a| problem.workers[a.worker].curve.sigma(a.effort)).collect();
    let mse = variance_term(&problem.estimator, &bundle, &sigmas)?;
    let (effort_cost, total) = match &problem.objective {
        Objective::Budget { .. } => {
            let spent = plan.total_effort();
            (spent, mse)
        }
        Objective::Weighted(_) => {
            let cost: f64 = plan.assignments.iter().map(|a| problem.eta(a.worker) * a.effort).sum();
            (cost, mse + cost)
        }
    };
    Ok(ObjectiveBreakdown { mse, effort_cost, total })
}

fn same_multiset(a: &[Point], b: &[Point]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|p| {
        b.iter().enumerate().any(|(j, q)| {
            if !used[j] && p == q {
                used[j] = true;
                true
            } else {
                false
            }
        })
    })
}

/// Engagements for contract synthesis; each worker's payment weight is the
/// problem's η for that worker.
pub fn engagements(plan: &Plan, problem: &PlanProblem) -> Vec<Engagement> {
    plan.assignments
        .iter()
        .map(|a| Engagement {
            worker: problem.workers[a.worker].clone(),
            point: a.point.clone(),
            target_effort: a.effort,
            eta: problem.eta(a.worker),
        })
        .collect()
}

/// Contract implementing `plan`.
pub fn synthesize(problem: &PlanProblem, plan: &Plan) -> Result<Contract> {
    check_leave_one_out(&problem.estimator, &plan.points())?;
    Ok(Contract::synthesize(problem.estimator.clone(), problem.distribution.clone(), engagements(plan, problem))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::FeatureMap;

    fn grid_min(h: f64, curve: &EffortCurve, eta: f64, n: usize) -> (f64, f64) {
        let step = (curve.effort_max - curve.effort_min) / (n - 1) as f64;
        (0..n)
            .map(|j| {
                let e = curve.effort_min + step * j as f64;
                (e, h * curve.variance(e) + eta * e)
            })
            .fold((0.0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    #[test]
    fn optimal_effort_examples() {
        let curve = EffortCurve::power_decay(2.0, 0.5, 0.0, 10.0);
        let a = optimal_effort(1.0, &curve, 1.0);
        assert!((a.effort - 1.0).abs() < 1e-9 && (a.cost - 3.0).abs() < 1e-12);
        let (ge, gc) = grid_min(1.0, &curve, 1.0, 1_000_001);
        assert!((ge - 1.0).abs() < 1e-5 && a.cost <= gc + 1e-12);

        let b = optimal_effort(0.25, &curve, 1.0);
        assert!(b.effort.abs() < 1e-9 && (b.cost - 1.0).abs() < 1e-12);
        let (ge, _) = grid_min(0.25, &curve, 1.0, 1_000_001);
        assert_eq!(ge, 0.0);

        let shifted = EffortCurve::power_decay(2.0, 0.5, 0.5, 3.0);
        let c = optimal_effort(0.0, &shifted, 2.0);
        assert_eq!(c.effort, 0.5);
        assert_eq!(c.cost, 1.0);
    }

    fn two_worker_problem() -> PlanProblem {
        PlanProblem {
            workers: vec![
                Worker::new("w1", EffortCurve::power_decay(1.0, 0.5, 0.0, 10.0)),
                Worker::new("w2", EffortCurve::power_decay(2.0, 0.5, 0.0, 10.0)),
            ],
            // Linear fit on {0, 1}; a point mass at 0 gives h = (1, 0), at
            // 0.5 gives (0.25, 0.25). Use a weighted F with h = (1, 0.25).
            points: PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(1.0)]),
            estimator: EstimatorSpec::ordinary(FeatureMap::polynomial(1, 1)),
            distribution: TestPointDistribution::point_mass(Point::scalar(0.0)),
            objective: Objective::Weighted(EtaWeights::Uniform(1.0)),
        }
    }

    #[test]
    fn edge_cost_dummy_columns() {
        let mut p = two_worker_problem();
        p.workers.push(Worker::new("w3", EffortCurve::power_decay(1.5, 0.5, 0.0, 10.0)));
        let c = edge_costs(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|row| row.len() == 3 && row[2] == 0.0));
        // h = (1, 0) here, so column 1 is free too (e_min = 0)
        assert!(c.iter().all(|row| row[1].abs() < 1e-12));
    }

    #[test]
    fn cost_matrix_example() {
        let workers = [
            Worker::new("w1", EffortCurve::power_decay(1.0, 0.5, 0.0, 10.0)),
            Worker::new("w2", EffortCurve::power_decay(2.0, 0.5, 0.0, 10.0)),
        ];
        let (c, _) = cost_matrix(&workers, &[1.0, 0.25], &[1.0, 1.0]);
        let expect = [[1.0, 0.25], [3.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[i][j] - expect[i][j]).abs() < 1e-12, "{c:?}");
            }
        }
    }

    #[test]
    fn fixed_solve_is_consistent() {
        let p = two_worker_problem();
        let plan = solve_fixed(&p).unwrap();
        let b = objective_value(&plan, &p).unwrap();
        assert!((b.total - plan.objective).abs() < 1e-12);
        assert_eq!(plan.assignments.len(), 2);
    }

    #[test]
    fn rejects_empty_and_oversized() {
        let mut p = two_worker_problem();
        p.points = PointSet::Fixed(vec![]);
        assert_eq!(solve_fixed(&p).unwrap_err(), OptimizeError::NoPoints);
        p.points = PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(1.0), Point::scalar(2.0)]);
        assert!(matches!(solve_fixed(&p), Err(OptimizeError::TooFewWorkers { .. })));
    }

    #[test]
    fn objective_value_examples() {
        let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
        let p = PlanProblem {
            workers: vec![Worker::new("a", curve), Worker::new("b", curve)],
            points: PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(0.0)]),
            estimator: EstimatorSpec::ordinary(FeatureMap::constant()),
            distribution: TestPointDistribution::point_mass(Point::scalar(0.0)),
            objective: Objective::Weighted(EtaWeights::Uniform(0.0625)),
        };
        let plan = solve_fixed(&p).unwrap();
        assert!((plan.objective - 0.375).abs() < 1e-9);
        assert!(plan.efforts().iter().all(|e| (e - 1.0).abs() < 1e-9));

        let mut q = p.clone();
        q.objective = Objective::Weighted(EtaWeights::PerWorker(vec![1.0, 2.0]));
        let mut half = plan.clone();
        half.assignments.iter_mut().for_each(|a| a.effort = 0.5);
        assert!((objective_value(&half, &q).unwrap().effort_cost - 1.5).abs() < 1e-12);

        let mut maxed = plan.clone();
        maxed.assignments.iter_mut().for_each(|a| a.effort = 4.0);
        let b = objective_value(&maxed, &p).unwrap();
        assert!((b.total - (0.25 * 0.2 * 2.0 + 0.0625 * 8.0)).abs() < 1e-12);

        let mut bad = plan.clone();
        bad.assignments[0].effort = 9.0;
        assert!(matches!(objective_value(&bad, &p), Err(OptimizeError::Inconsistent(_))));
        let mut dup = plan;
        dup.assignments[1].worker = 0;
        dup.assignments[1].worker_id = "a".into();
        assert!(matches!(objective_value(&dup, &p), Err(OptimizeError::Inconsistent(_))));
    }
}
