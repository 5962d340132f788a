//! Random problem generators and independent oracles shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use esw::estimator::{fit_predict, EstimatorSpec, FeatureMap, Point, TestPointDistribution};
use esw::mechanism::{Contract, EffortCurve, Worker};
use esw::noise::GroundTruth;
use esw::optimizer::{self, EtaWeights, Objective, Plan, PlanProblem, PointSet};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_curve(rng: &mut ChaCha8Rng) -> EffortCurve {
    let lo = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5) };
    let hi = lo + rng.random_range(3.0..4.0);
    if rng.random_bool(0.7) {
        EffortCurve::power_decay(rng.random_range(0.5..2.0), rng.random_range(0.6..1.5), lo, hi)
    } else {
        EffortCurve::exponential_decay(rng.random_range(0.5..2.0), rng.random_range(0.3..1.0), lo, hi)
    }
}

/// Random weights that sum to 1 within the distribution's tolerance.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    w
}

pub fn random_distribution(rng: &mut ChaCha8Rng, max_support: usize) -> TestPointDistribution {
    let n = rng.random_range(1..=max_support);
    let support = (0..n).map(|_| Point::scalar(rng.random_range(0.0..1.0))).collect();
    TestPointDistribution::new(support, random_weights(rng, n)).unwrap()
}

/// Distinct scalar points drawn from an 11-point grid on [0, 1].
pub fn distinct_points(rng: &mut ChaCha8Rng, m: usize) -> Vec<Point> {
    let grid: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
    grid.choose_multiple(rng, m).map(|&x| Point::scalar(x)).collect()
}

pub struct Case {
    pub problem: PlanProblem,
    pub truth: GroundTruth,
}

/// A fixed-points problem with 2..=`max_workers` workers and a univariate
/// polynomial of degree at most `max_degree`. Points are distinct and at
/// least `degree + 2`, so every leave-one-out fit is well defined.
pub fn random_case(rng: &mut ChaCha8Rng, max_workers: usize, max_degree: u32) -> Case {
    let k = rng.random_range(2..=max_workers);
    let degree = rng.random_range(0..=max_degree.min(k as u32 - 2));
    let m = rng.random_range(degree as usize + 2..=k);
    let workers = (0..k).map(|i| Worker::new(format!("w{i}"), random_curve(rng))).collect();
    let eta = (rng.random_range(0.005f64.ln()..0.2f64.ln())).exp();
    let problem = PlanProblem {
        workers,
        points: PointSet::Fixed(distinct_points(rng, m)),
        estimator: EstimatorSpec::ordinary(FeatureMap::polynomial(degree, 1)),
        distribution: random_distribution(rng, 3),
        objective: Objective::Weighted(EtaWeights::Uniform(eta)),
    };
    let truth = GroundTruth::new((0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect());
    Case { problem, truth }
}

pub fn solve_and_synthesize(problem: &PlanProblem) -> (Plan, Contract) {
    let plan = optimizer::solve_fixed(problem).unwrap();
    let contract = optimizer::synthesize(problem, &plan).unwrap();
    (plan, contract)
}

pub fn worked_problem() -> PlanProblem {
    let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
    PlanProblem {
        workers: vec![Worker::new("a", curve), Worker::new("b", curve)],
        points: PointSet::Fixed(vec![Point::scalar(0.0), Point::scalar(0.0)]),
        estimator: EstimatorSpec::ordinary(FeatureMap::constant()),
        distribution: TestPointDistribution::point_mass(Point::scalar(0.0)),
        objective: Objective::Weighted(EtaWeights::Uniform(0.0625)),
    }
}

/// Per-point sensitivities recovered from the fit itself: `f̂(q)` is linear
/// in the labels, so fitting unit label vectors gives its weights, and
/// `h_j = E_q[w_j(q)²]`.
pub fn oracle_h(spec: &EstimatorSpec, points: &[Point], dist: &TestPointDistribution) -> Vec<f64> {
    let k = points.len();
    let mut h = vec![0.0; k];
    for (q, w) in dist.support().iter().zip(dist.weights()) {
        for (j, hj) in h.iter_mut().enumerate() {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let wj = fit_predict(spec, points, &e, q).unwrap();
            *hj += w * wj * wj;
        }
    }
    h
}

/// Minimum of a convex function on `[lo, hi]`: scan `n` grid points, then
/// ternary-search the bracket around the best one.
pub fn grid_then_ternary(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let step = (hi - lo) / (n - 1) as f64;
    let at = |j: usize| if j == n - 1 { hi } else { lo + step * j as f64 };
    let best = (0..n).fold(0, |b, j| if f(at(j)) < f(at(b)) { j } else { b });
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(n - 1)));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let x = 0.5 * (a + b);
    let candidates = [x, at(best), lo, hi];
    candidates.iter().map(|&e| (e, f(e))).fold((x, f(x)), |acc, c| if c.1 < acc.1 { c } else { acc })
}

/// All injective maps from `m` slots into `k` items, as index vectors.
pub fn injections(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in 0..k {
            if !cur.contains(&i) {
                cur.push(i);
                rec(k, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(k, m, &mut Vec::new(), &mut out);
    out
}
