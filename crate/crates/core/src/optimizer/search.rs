//! Point selection from a finite candidate set.
//!
//! For a fixed multiset of points the assignment and efforts are solved
//! exactly by matching; the search is over multisets only. Any plan found
//! can be implemented by the same contract construction, so a heuristic
//! search still yields a dominant-strategy mechanism with the heuristic's
//! objective.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assign_points, OptimizeError, Plan, PlanProblem, PointSet, Result};
use crate::estimator::{check_leave_one_out, Point};

/// Largest number of point configurations exhaustive search will visit.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Ratio to the exhaustive optimum that local search is tested against on
/// small instances. An empirical bound, not a guarantee.
pub const LOCAL_SEARCH_FACTOR: f64 = 1.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum SearchStrategy {
    #[default]
    Exhaustive,
    LocalSearch {
        restarts: u32,
        seed: u64,
    },
}

impl SearchStrategy {
    pub fn local_search() -> Self {
        SearchStrategy::LocalSearch { restarts: 8, seed: 0 }
    }
}

struct Space<'a> {
    problem: &'a PlanProblem,
    candidates: &'a [Point],
    min: usize,
    max: usize,
    distinct: bool,
    etas: Vec<f64>,
}

impl Space<'_> {
    fn evaluate(&self, config: &[usize]) -> Option<Plan> {
        let points: Vec<Point> = config.iter().map(|&c| self.candidates[c].clone()).collect();
        check_leave_one_out(&self.problem.estimator, &points).ok()?;
        assign_points(&self.problem.workers, &self.etas, &self.problem.estimator, &self.problem.distribution, &points)
            .ok()
    }

    fn count(&self) -> u128 {
        let c = self.candidates.len() as u128;
        (self.min..=self.max)
            .map(|k| {
                let k = k as u128;
                if self.distinct {
                    binomial(c, k)
                } else {
                    binomial(c + k - 1, k)
                }
            })
            .fold(0u128, |a, b| a.saturating_add(b))
    }

    /// All sorted index tuples of each size, in lexicographic order.
    fn enumerate(&self) -> Vec<Vec<usize>> {
        fn rec(start: usize, left: usize, n: usize, distinct: bool, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left == 0 {
                out.push(cur.clone());
                return;
            }
            for c in start..n {
                cur.push(c);
                rec(if distinct { c + 1 } else { c }, left - 1, n, distinct, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        for k in self.min..=self.max {
            rec(0, k, self.candidates.len(), self.distinct, &mut Vec::new(), &mut out);
        }
        out
    }

    fn is_valid(&self, config: &[usize]) -> bool {
        let k = config.len();
        if k < self.min || k > self.max {
            return false;
        }
        !(self.distinct && config.windows(2).any(|w| w[0] == w[1]))
    }

    fn neighbors(&self, config: &[usize]) -> Vec<Vec<usize>> {
        let n = self.candidates.len();
        let mut out = Vec::new();
        for p in 0..config.len() {
            for c in 0..n {
                if c != config[p] {
                    let mut next = config.to_vec();
                    next[p] = c;
                    next.sort_unstable();
                    out.push(next);
                }
            }
            let mut fewer = config.to_vec();
            fewer.remove(p);
            out.push(fewer);
        }
        for c in 0..n {
            let mut more = config.to_vec();
            more.push(c);
            more.sort_unstable();
            out.push(more);
        }
        out.retain(|c| self.is_valid(c));
        out.sort();
        out.dedup();
        out
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Best plan over multisets of candidate points.
pub fn solve_candidates(problem: &PlanProblem, strategy: SearchStrategy) -> Result<Plan> {
    problem.validate()?;
    let PointSet::Candidates { points, max_selected, min_selected, distinct } = &problem.points else {
        return Err(OptimizeError::InvalidProblem("solve_candidates needs a candidate set".into()));
    };
    let max = (*max_selected).min(problem.workers.len());
    let mut max = max;
    if *distinct {
        max = max.min(points.len());
    }
    let min = min_selected.unwrap_or(2).max(2);
    if min > max {
        return Err(OptimizeError::InvalidProblem(format!("cannot select between {min} and {max} points")));
    }
    let space = Space { problem, candidates: points, min, max, distinct: *distinct, etas: problem.weighted_etas() };
    match strategy {
        SearchStrategy::Exhaustive => exhaustive(&space),
        SearchStrategy::LocalSearch { restarts, seed } => local_search(&space, restarts.max(1), seed),
    }
}

fn exhaustive(space: &Space) -> Result<Plan> {
    let count = space.count();
    if count > EXHAUSTIVE_LIMIT {
        return Err(OptimizeError::SearchTooLarge { count, limit: EXHAUSTIVE_LIMIT });
    }
    let configs = space.enumerate();
    let plans: Vec<Option<Plan>> = configs.par_iter().map(|c| space.evaluate(c)).collect();
    // First strictly better plan wins, so ties keep the earliest configuration.
    plans
        .into_iter()
        .flatten()
        .fold(None, |best: Option<Plan>, p| match best {
            Some(b) if b.objective <= p.objective => Some(b),
            _ => Some(p),
        })
        .ok_or(OptimizeError::NoFeasibleDesign)
}

fn random_start(space: &Space, rng: &mut ChaCha8Rng) -> Option<(Vec<usize>, Plan)> {
    let all: Vec<usize> = (0..space.candidates.len()).collect();
    for _ in 0..200 {
        let k = rng.random_range(space.min..=space.max);
        let mut config: Vec<usize> = if space.distinct {
            all.choose_multiple(rng, k).copied().collect()
        } else {
            (0..k).map(|_| rng.random_range(0..all.len())).collect()
        };
        config.sort_unstable();
        if let Some(plan) = space.evaluate(&config) {
            return Some((config, plan));
        }
    }
    None
}

fn local_search(space: &Space, restarts: u32, seed: u64) -> Result<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Plan> = None;
    for _ in 0..restarts {
        let Some((mut config, mut plan)) = random_start(space, &mut rng) else {
            continue;
        };
        let mut trace = vec![plan.objective];
        loop {
            let candidates = space.neighbors(&config);
            let evaluated: Vec<Option<Plan>> = candidates.par_iter().map(|c| space.evaluate(c)).collect();
            let step = candidates.into_iter().zip(evaluated).filter_map(|(c, p)| p.map(|p| (c, p))).fold(
                None,
                |acc: Option<(Vec<usize>, Plan)>, (c, p)| match acc {
                    Some((ac, ap)) if ap.objective <= p.objective => Some((ac, ap)),
                    _ => Some((c, p)),
                },
            );
            match step {
                Some((c, p)) if p.objective < plan.objective - 1e-15 * (1.0 + plan.objective.abs()) => {
                    config = c;
                    plan = p;
                    trace.push(plan.objective);
                }
                _ => break,
            }
        }
        plan.search_trace = trace;
        if best.as_ref().is_none_or(|b| plan.objective < b.objective) {
            best = Some(plan);
        }
    }
    let mut plan = best.ok_or(OptimizeError::NoFeasibleDesign)?;
    plan.heuristic = true;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorSpec, FeatureMap, TestPointDistribution};
    use crate::mechanism::{EffortCurve, Worker};
    use crate::optimizer::{EtaWeights, Objective};

    fn problem(candidates: Vec<f64>, max_selected: usize, workers: usize, eta: f64) -> PlanProblem {
        PlanProblem {
            workers: (0..workers)
                .map(|i| Worker::new(format!("w{i}"), EffortCurve::power_decay(1.0 + 0.3 * i as f64, 0.5, 0.0, 5.0)))
                .collect(),
            points: PointSet::Candidates {
                points: candidates.into_iter().map(Point::scalar).collect(),
                max_selected,
                min_selected: None,
                distinct: false,
            },
            estimator: EstimatorSpec::ordinary(FeatureMap::polynomial(1, 1)),
            distribution: TestPointDistribution::uniform(vec![Point::scalar(0.2), Point::scalar(0.9)]).unwrap(),
            objective: Objective::Weighted(EtaWeights::Uniform(eta)),
        }
    }

    #[test]
    fn counts_multisets() {
        let p = problem(vec![0.0, 1.0, 2.0], 3, 3, 1.0);
        let PointSet::Candidates { points, .. } = &p.points else { unreachable!() };
        let s = Space { problem: &p, candidates: points, min: 2, max: 3, distinct: false, etas: vec![1.0; 3] };
        assert_eq!(s.count(), 6 + 10);
        assert_eq!(s.enumerate().len(), 16);
    }

    #[test]
    fn refuses_oversized_search() {
        let p = problem((0..60).map(f64::from).collect(), 6, 6, 1.0);
        assert!(matches!(solve_candidates(&p, SearchStrategy::Exhaustive), Err(OptimizeError::SearchTooLarge { .. })));
    }

    #[test]
    fn single_candidate_constant_map() {
        let mut p = problem(vec![0.3], 2, 2, 1e6);
        p.estimator = EstimatorSpec::ordinary(FeatureMap::constant());
        let plan = solve_candidates(&p, SearchStrategy::Exhaustive).unwrap();
        assert_eq!(plan.assignments.len(), 2);
        assert!(plan.assignments.iter().all(|a| a.point == Point::scalar(0.3) && a.effort == 0.0));
    }

    #[test]
    fn local_search_never_beats_exhaustive_and_descends() {
        let p = problem(vec![0.0, 0.5, 1.0, 1.5], 4, 4, 0.05);
        let exact = solve_candidates(&p, SearchStrategy::Exhaustive).unwrap();
        let heur = solve_candidates(&p, SearchStrategy::LocalSearch { restarts: 4, seed: 9 }).unwrap();
        assert!(heur.heuristic && !exact.heuristic);
        assert!(heur.objective >= exact.objective - 1e-12);
        assert!(heur.objective <= LOCAL_SEARCH_FACTOR * exact.objective);
        assert!(heur.search_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
