//! Monte Carlo play of the game a contract induces.
//!
//! Workers pick efforts according to a [`StrategyProfile`], report
//! `f(x_i) + ε_i`, and are paid by the contract. The simulator owns the
//! ground truth; nothing here feeds back into contract synthesis.
//!
//! Every episode draws from its own seeded stream (see [`crate::noise`]), so
//! results do not depend on thread count or evaluation order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{fit_predict, prediction_weights, EstimatorError, FeatureMap, Point};
use crate::mechanism::{Contract, EffortCurve, MechanismError};
use crate::noise::{self, slot, GroundTruth, NoiseModel};
use crate::stats::{self, Accumulator, Estimate};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error("effort {effort} outside [{min}, {max}]")]
    EffortOutOfRange { effort: f64, min: f64, max: f64 },
    #[error("invalid strategy profile: {0}")]
    InvalidProfile(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("need at least 2 episodes, got {0}")]
    TooFewEpisodes(u64),
    #[error("empty effort grid")]
    EmptyGrid,
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

pub type Result<T> = std::result::Result<T, SimError>;

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

/// What the planner never sees: the true function and the noise law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub truth: GroundTruth,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Multiplies every worker's σ. Values below 1 give the noiseless limit.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub sigma_scale: f64,
}

impl Environment {
    pub fn new(truth: GroundTruth, noise: NoiseModel) -> Self {
        Self { truth, noise, sigma_scale: 1.0 }
    }

    pub fn validate(&self, map: &FeatureMap) -> Result<()> {
        if self.truth.coefficients.len() != map.output_dim() {
            return Err(SimError::InvalidEnvironment(format!(
                "ground truth has {} coefficients, feature map has {} features",
                self.truth.coefficients.len(),
                map.output_dim()
            )));
        }
        if self.truth.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SimError::InvalidEnvironment("non-finite ground truth coefficient".into()));
        }
        if !(self.sigma_scale.is_finite() && self.sigma_scale >= 0.0) {
            return Err(SimError::InvalidEnvironment("sigma_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// How one worker chooses effort.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "effort")]
pub enum EffortPolicy {
    /// The contract's target effort.
    Target,
    Fixed(f64),
    /// A fresh uniform draw from the worker's interval every episode.
    UniformRandom,
    /// The argmax of the worker's empirical best-response curve against
    /// opponents playing their targets (41-point grid).
    BestResponseEmpirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyProfile(pub Vec<EffortPolicy>);

impl StrategyProfile {
    pub fn uniform(policy: EffortPolicy, workers: usize) -> Self {
        Self(vec![policy; workers])
    }

    pub fn target(workers: usize) -> Self {
        Self::uniform(EffortPolicy::Target, workers)
    }

    pub fn fixed(efforts: &[f64]) -> Self {
        Self(efforts.iter().map(|&e| EffortPolicy::Fixed(e)).collect())
    }
}

/// Grid size and pairs per point used to resolve
/// [`EffortPolicy::BestResponseEmpirical`].
pub const RESOLVE_GRID: usize = 41;
pub const RESOLVE_PAIRS: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Resolved {
    Fixed(f64),
    Uniform,
}

fn check_effort(curve: &EffortCurve, e: f64) -> Result<()> {
    if curve.contains(e) {
        Ok(())
    } else {
        Err(SimError::EffortOutOfRange { effort: e, min: curve.effort_min, max: curve.effort_max })
    }
}

fn resolve(contract: &Contract, env: &Environment, profile: &StrategyProfile, seed: u64) -> Result<Vec<Resolved>> {
    if profile.0.len() != contract.len() {
        return Err(SimError::InvalidProfile(format!("{} policies for {} workers", profile.0.len(), contract.len())));
    }
    let targets = StrategyProfile::target(contract.len());
    profile
        .0
        .iter()
        .zip(&contract.terms)
        .enumerate()
        .map(|(i, (p, t))| match *p {
            EffortPolicy::Target => Ok(Resolved::Fixed(t.target_effort)),
            EffortPolicy::Fixed(e) => check_effort(&t.worker.curve, e).map(|_| Resolved::Fixed(e)),
            EffortPolicy::UniformRandom => Ok(Resolved::Uniform),
            EffortPolicy::BestResponseEmpirical => {
                let grid = effort_grid(&t.worker.curve, RESOLVE_GRID);
                let sub_seed = seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1);
                let curve = empirical_best_response(contract, env, i, &targets, &grid, RESOLVE_PAIRS, sub_seed)?;
                Ok(Resolved::Fixed(curve.argmax_effort))
            }
        })
        .collect()
}

/// `n` evenly spaced efforts spanning the curve's interval.
pub fn effort_grid(curve: &EffortCurve, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![curve.effort_min];
    }
    let step = (curve.effort_max - curve.effort_min) / (n - 1) as f64;
    (0..n).map(|j| if j == n - 1 { curve.effort_max } else { curve.effort_min + step * j as f64 }).collect()
}

/// One noisy report `y = f(x) + ε` with `Var ε = σ(e)²`.
pub fn sample_report<R: Rng + ?Sized>(
    curve: &EffortCurve,
    map: &FeatureMap,
    truth: &GroundTruth,
    noise: NoiseModel,
    x: &Point,
    effort: f64,
    rng: &mut R,
) -> Result<f64> {
    check_effort(curve, effort)?;
    Ok(truth.eval(map, x) + noise.sample(curve.sigma(effort), rng))
}

/// Everything observable about one play of the game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub episode: u64,
    pub test_point: Point,
    pub efforts: Vec<f64>,
    /// Report of each worker at their contract point, in contract order.
    pub reports: Vec<f64>,
    pub payments: Vec<f64>,
    /// `(f̂(x*) − f(x*))²` for the fit on all reports.
    pub squared_error: f64,
}

/// Precomputed linear maps from reports to predictions, so an episode costs
/// `O(k²)` instead of `k + 1` least-squares fits.
struct Game<'a> {
    contract: &'a Contract,
    env: &'a Environment,
    policies: Vec<Resolved>,
    loo: Vec<Vec<f64>>,
    fit: Vec<Vec<f64>>,
    truth_at_points: Vec<f64>,
    truth_at_support: Vec<f64>,
    seed: u64,
}

impl<'a> Game<'a> {
    fn new(contract: &'a Contract, env: &'a Environment, profile: &StrategyProfile, seed: u64) -> Result<Self> {
        let map = &contract.estimator.features;
        env.validate(map)?;
        let policies = resolve(contract, env, profile, seed)?;
        let points = contract.points();
        let fit = contract
            .distribution
            .support()
            .iter()
            .map(|q| prediction_weights(&contract.estimator, &points, q))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            contract,
            env,
            policies,
            loo: contract.loo_weights()?,
            fit,
            truth_at_points: points.iter().map(|x| env.truth.eval(map, x)).collect(),
            truth_at_support: contract.distribution.support().iter().map(|x| env.truth.eval(map, x)).collect(),
            seed,
        })
    }

    fn k(&self) -> usize {
        self.contract.len()
    }

    fn effort(&self, i: usize, episode: u64) -> f64 {
        match self.policies[i] {
            Resolved::Fixed(e) => e,
            Resolved::Uniform => {
                let c = &self.contract.terms[i].worker.curve;
                let u: f64 = noise::stream(self.seed, episode, slot::effort(i)).random();
                c.clamp(c.effort_min + u * (c.effort_max - c.effort_min))
            }
        }
    }

    fn sigma(&self, i: usize, effort: f64) -> f64 {
        self.env.sigma_scale * self.contract.terms[i].worker.curve.sigma(effort)
    }

    fn unit_noise(&self, i: usize, episode: u64) -> f64 {
        self.env.noise.standard(&mut noise::stream(self.seed, episode, slot::noise(i)))
    }

    fn test_index(&self, episode: u64) -> usize {
        let u: f64 = noise::stream(self.seed, episode, slot::TEST_POINT).random();
        self.contract.distribution.index_for(u)
    }

    fn dot(w: &[f64], y: &[f64]) -> f64 {
        w.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// Efforts, reports, payments and squared error, written into buffers.
    fn play(&self, episode: u64, efforts: &mut [f64], reports: &mut [f64], payments: &mut [f64]) -> (usize, f64) {
        for i in 0..self.k() {
            efforts[i] = self.effort(i, episode);
            reports[i] = self.truth_at_points[i] + self.sigma(i, efforts[i]) * self.unit_noise(i, episode);
        }
        for (i, t) in self.contract.terms.iter().enumerate() {
            let r = reports[i] - Self::dot(&self.loo[i], reports);
            payments[i] = t.intercept - t.slope * r * r;
        }
        let j = self.test_index(episode);
        let err = Self::dot(&self.fit[j], reports) - self.truth_at_support[j];
        (j, err * err)
    }
}

/// Play episode `episode` of the stream seeded by `seed`.
///
/// This path refits the estimator for every prediction; the bulk estimators
/// use precomputed weights and are tested against it.
pub fn run_episode(
    contract: &Contract,
    env: &Environment,
    profile: &StrategyProfile,
    seed: u64,
    episode: u64,
) -> Result<EpisodeOutcome> {
    let game = Game::new(contract, env, profile, seed)?;
    let map = &contract.estimator.features;
    let points = contract.points();
    let k = contract.len();
    let efforts: Vec<f64> = (0..k).map(|i| game.effort(i, episode)).collect();
    let mut reports = Vec::with_capacity(k);
    for (i, t) in contract.terms.iter().enumerate() {
        let mut rng = noise::stream(seed, episode, slot::noise(i));
        let y = sample_report(&t.worker.curve, map, &env.truth, env.noise, &points[i], efforts[i], &mut rng)?;
        // sample_report draws at σ(e); rescale the noise part for sigma_scale.
        let f = game.truth_at_points[i];
        reports.push(f + env.sigma_scale * (y - f));
    }
    let payments = contract.realized_payment(&reports)?;
    let j = game.test_index(episode);
    let test_point = contract.distribution.support()[j].clone();
    let err = fit_predict(&contract.estimator, &points, &reports, &test_point)? - game.truth_at_support[j];
    Ok(EpisodeOutcome { seed, episode, test_point, efforts, reports, payments, squared_error: err * err })
}

/// Monte Carlo estimates of the planner's objective and each worker's
/// payment and utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub episodes: u64,
    pub seed: u64,
    /// `(f̂(x*) − f(x*))²`
    pub mse: Estimate,
    /// `Σ η_i p_i`
    pub payment: Estimate,
    /// `mse + payment`, per episode
    pub total: Estimate,
    pub worker_payments: Vec<Estimate>,
    /// `p_i − e_i`
    pub worker_utilities: Vec<Estimate>,
}

pub fn estimate_objective(
    contract: &Contract,
    env: &Environment,
    profile: &StrategyProfile,
    n: u64,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    if n < 2 {
        return Err(SimError::TooFewEpisodes(n));
    }
    let game = Game::new(contract, env, profile, seed)?;
    let k = game.k();
    let width = 3 + 2 * k;
    let rows: Vec<Vec<Accumulator>> = stats::chunks(n)
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![Accumulator::new(); width];
            let (mut e, mut y, mut p) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
            for ep in range {
                let (_, sq) = game.play(ep, &mut e, &mut y, &mut p);
                let paid: f64 = contract.terms.iter().zip(&p).map(|(t, p)| t.eta * p).sum();
                acc[0].push(sq);
                acc[1].push(paid);
                acc[2].push(sq + paid);
                for i in 0..k {
                    acc[3 + i].push(p[i]);
                    acc[3 + k + i].push(p[i] - e[i]);
                }
            }
            acc
        })
        .collect();
    let acc = stats::merge_rows(rows, width);
    Ok(ObjectiveEstimate {
        episodes: n,
        seed,
        mse: acc[0].estimate(),
        payment: acc[1].estimate(),
        total: acc[2].estimate(),
        worker_payments: acc[3..3 + k].iter().map(Accumulator::estimate).collect(),
        worker_utilities: acc[3 + k..].iter().map(Accumulator::estimate).collect(),
    })
}

/// Empirical expected utility of one worker across an effort grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponseCurve {
    pub worker: usize,
    pub grid: Vec<f64>,
    pub utility: Vec<Estimate>,
    pub argmax: usize,
    pub argmax_effort: f64,
    /// The runner-up grid point trails the argmax by more than 2 standard
    /// errors of the paired difference.
    pub confident: bool,
    /// Every grid point not adjacent to the argmax trails it by more than
    /// 2 standard errors of the paired difference.
    pub isolated: bool,
}

/// Worker `i`'s mean utility at each grid effort while the others follow
/// `opponents` (entry `i` is ignored).
///
/// All grid points share the episode's randomness (test point, opponents'
/// efforts and noise, and worker `i`'s unit noise draw). Each of the `n`
/// samples averages the antithetic pair `±z` of worker `i`'s unit draw,
/// which cancels the term linear in `z`.
pub fn empirical_best_response(
    contract: &Contract,
    env: &Environment,
    i: usize,
    opponents: &StrategyProfile,
    grid: &[f64],
    n: u64,
    seed: u64,
) -> Result<BestResponseCurve> {
    if grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    if n < 2 {
        return Err(SimError::TooFewEpisodes(n));
    }
    if i >= contract.len() {
        return Err(SimError::InvalidProfile(format!("no worker at index {i}")));
    }
    let mut opponents = opponents.clone();
    if let Some(p) = opponents.0.get_mut(i) {
        // Own policy is irrelevant; avoid resolving it.
        *p = EffortPolicy::Target;
    }
    let term = &contract.terms[i];
    for &e in grid {
        check_effort(&term.worker.curve, e)?;
    }
    let game = Game::new(contract, env, &opponents, seed)?;
    let k = game.k();
    let g = grid.len();
    let own_sigma: Vec<f64> = grid.iter().map(|&e| game.sigma(i, e)).collect();

    // Utilities of every grid effort in one episode, written into `out`.
    let sample = |ep: u64, y: &mut [f64], out: &mut [f64]| {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = if j == i {
                0.0
            } else {
                game.truth_at_points[j] + game.sigma(j, game.effort(j, ep)) * game.unit_noise(j, ep)
            };
        }
        let offset = game.truth_at_points[i] - Game::dot(&game.loo[i], y);
        let z = game.unit_noise(i, ep);
        for ((u, s), &e) in out.iter_mut().zip(&own_sigma).zip(grid) {
            let (a, b) = (offset + s * z, offset - s * z);
            *u = term.intercept - term.slope * 0.5 * (a * a + b * b) - e;
        }
    };
    // Two passes over the same draws: means first, then paired differences
    // against the argmax. Memory stays O(grid) for any n.
    let pass = |reference: Option<usize>| -> Vec<Accumulator> {
        let rows: Vec<Vec<Accumulator>> = stats::chunks(n)
            .into_par_iter()
            .map(|range| {
                let mut acc = vec![Accumulator::new(); g];
                let (mut y, mut u) = (vec![0.0; k], vec![0.0; g]);
                for ep in range {
                    sample(ep, &mut y, &mut u);
                    let base = reference.map_or(0.0, |r| u[r]);
                    for (a, &v) in acc.iter_mut().zip(&u) {
                        a.push(if reference.is_some() { base - v } else { v });
                    }
                }
                acc
            })
            .collect();
        stats::merge_rows(rows, g)
    };

    let utility: Vec<Estimate> = pass(None).iter().map(Accumulator::estimate).collect();
    let argmax = (1..g).fold(0, |best, j| if utility[j].mean > utility[best].mean { j } else { best });
    let gaps: Vec<Estimate> = pass(Some(argmax)).iter().map(Accumulator::estimate).collect();
    let clear = |j: usize| gaps[j].mean > 2.0 * gaps[j].std_error;
    let runner_up = (0..g).filter(|&j| j != argmax).fold(None, |best: Option<usize>, j| match best {
        Some(b) if utility[b].mean >= utility[j].mean => Some(b),
        _ => Some(j),
    });
    let confident = runner_up.is_none_or(clear);
    let isolated = (0..g).filter(|&j| j.abs_diff(argmax) > 1).all(clear);
    Ok(BestResponseCurve {
        worker: i,
        grid: grid.to_vec(),
        utility,
        argmax,
        argmax_effort: grid[argmax],
        confident,
        isolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorSpec, TestPointDistribution};
    use crate::mechanism::{Engagement, Worker};

    fn worked() -> Contract {
        let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
        let engagements = ["a", "b"]
            .iter()
            .map(|id| Engagement {
                worker: Worker::new(*id, curve),
                point: Point::scalar(0.0),
                target_effort: 1.0,
                eta: 0.0625,
            })
            .collect();
        Contract::synthesize(
            EstimatorSpec::ordinary(FeatureMap::constant()),
            TestPointDistribution::point_mass(Point::scalar(0.0)),
            engagements,
        )
        .unwrap()
    }

    fn env(noise: NoiseModel) -> Environment {
        Environment::new(GroundTruth::new(vec![0.7]), noise)
    }

    #[test]
    fn two_point_reports_are_exact() {
        let curve = EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0);
        let map = FeatureMap::constant();
        let truth = GroundTruth::new(vec![2.0]);
        for ep in 0..50 {
            let mut rng = noise::stream(1, ep, 1);
            let y =
                sample_report(&curve, &map, &truth, NoiseModel::SymmetricTwoPoint, &Point::scalar(0.0), 3.0, &mut rng)
                    .unwrap();
            assert!(y == 2.0 + 0.5 || y == 2.0 - 0.5, "{y}");
        }
        let mut rng = noise::stream(1, 0, 1);
        assert!(matches!(
            sample_report(&curve, &map, &truth, NoiseModel::Gaussian, &Point::scalar(0.0), 5.0, &mut rng),
            Err(SimError::EffortOutOfRange { .. })
        ));
    }

    #[test]
    fn episodes_are_reproducible_and_match_fast_path() {
        let c = worked();
        let e = env(NoiseModel::Gaussian);
        let p = StrategyProfile(vec![EffortPolicy::UniformRandom, EffortPolicy::Fixed(2.0)]);
        let a = run_episode(&c, &e, &p, 42, 7).unwrap();
        let b = run_episode(&c, &e, &p, 42, 7).unwrap();
        assert_eq!(a, b);
        let game = Game::new(&c, &e, &p, 42).unwrap();
        let (mut ef, mut y, mut pay) = (vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        let (_, sq) = game.play(7, &mut ef, &mut y, &mut pay);
        assert_eq!(ef, a.efforts);
        assert_eq!(y, a.reports);
        for (x, z) in pay.iter().zip(&a.payments) {
            assert!((x - z).abs() < 1e-12);
        }
        assert!((sq - a.squared_error).abs() < 1e-12);
    }

    #[test]
    fn noiseless_limit() {
        let c = worked();
        let mut e = env(NoiseModel::Gaussian);
        e.sigma_scale = 1e-9;
        let o = run_episode(&c, &e, &StrategyProfile::target(2), 3, 0).unwrap();
        assert!(o.squared_error <= 1e-12);
        for (p, t) in o.payments.iter().zip(&c.terms) {
            assert!((p - t.intercept).abs() < 1e-9);
        }
    }

    #[test]
    fn small_sample_estimates_are_finite() {
        let est = estimate_objective(&worked(), &env(NoiseModel::Gaussian), &StrategyProfile::target(2), 2, 0).unwrap();
        assert!(est.total.std_error.is_finite());
        assert_eq!(
            estimate_objective(&worked(), &env(NoiseModel::Gaussian), &StrategyProfile::target(2), 1, 0).unwrap_err(),
            SimError::TooFewEpisodes(1)
        );
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let c = worked();
        let e = env(NoiseModel::CenteredUniform);
        let p = StrategyProfile::uniform(EffortPolicy::UniformRandom, 2);
        let a = estimate_objective(&c, &e, &p, 5000, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| estimate_objective(&c, &e, &p, 5000, 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn best_response_curve_peaks_at_target() {
        let c = worked();
        let e = env(NoiseModel::Gaussian);
        let grid = effort_grid(&c.terms[0].worker.curve, 41);
        for opp in [c.targets(), c.min_profile(), c.max_profile()] {
            let r = empirical_best_response(&c, &e, 0, &StrategyProfile::fixed(&opp), &grid, 10_000, 5).unwrap();
            assert_eq!(r.argmax, 10, "{r:?}");
            assert!(r.isolated);
        }
        let tampered = c.with_scaled_slopes(1.1);
        let r = empirical_best_response(&tampered, &e, 0, &StrategyProfile::target(2), &grid, 10_000, 5).unwrap();
        assert_eq!(r.argmax, 11);
    }

    #[test]
    fn empirical_policy_resolves_near_target() {
        let c = worked();
        let e = env(NoiseModel::SymmetricTwoPoint);
        let p = StrategyProfile(vec![EffortPolicy::BestResponseEmpirical, EffortPolicy::Target]);
        let o = run_episode(&c, &e, &p, 9, 0).unwrap();
        assert!((o.efforts[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = worked();
        let bad_truth = Environment::new(GroundTruth::new(vec![1.0, 2.0]), NoiseModel::Gaussian);
        assert!(matches!(
            run_episode(&c, &bad_truth, &StrategyProfile::target(2), 0, 0),
            Err(SimError::InvalidEnvironment(_))
        ));
        assert!(matches!(
            run_episode(&c, &env(NoiseModel::Gaussian), &StrategyProfile::fixed(&[9.0, 1.0]), 0, 0),
            Err(SimError::EffortOutOfRange { .. })
        ));
        assert!(matches!(
            run_episode(&c, &env(NoiseModel::Gaussian), &StrategyProfile::target(3), 0, 0),
            Err(SimError::InvalidProfile(_))
        ));
    }
}
