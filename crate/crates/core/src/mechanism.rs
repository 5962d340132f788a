//! Payment contracts that make a chosen effort profile the unique dominant
//! strategy equilibrium at zero worker surplus.
//!
//! Worker `i` reporting `y_i` at point `x_i` is paid
//!
//! ```text
//! p_i = c_i − d_i · (y_i − f̂₋ᵢ(x_i))²
//! ```
//!
//! where `f̂₋ᵢ` is the estimator fit on everyone else's reports. Its expected
//! value is `c_i − d_i (σ_i(e_i)² + G₋ᵢ)`, with the peer risk `G₋ᵢ` depending
//! only on the other workers. Setting `d_i = −1 / (2 σ_i σ_i′)` at the target
//! effort makes the target the maximizer of payment minus effort whatever the
//! others do, and `c_i = d_i (σ_i² + G₋ᵢ) + e_i` makes that maximum zero.
//!
//! Nothing here reads a ground-truth function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    self, check_leave_one_out, loo_predict, mse_g, EstimatorError, EstimatorSpec, Point, TestPointDistribution,
};

/// Agreement tolerance for "the same equilibrium effort".
pub const EFFORT_TOLERANCE: f64 = 1e-6;
/// Tolerance on zero expected utility at the target profile.
pub const UTILITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MechanismError {
    #[error("effort {effort} outside [{min}, {max}]")]
    EffortOutOfRange { effort: f64, min: f64, max: f64 },
    #[error("invalid effort curve: {0}")]
    InvalidCurve(String),
    #[error("contracts for ridge estimators need a bias-cancelling payment term, which is not supported")]
    RidgeUnsupported,
    #[error("inconsistent contract input: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

pub type Result<T> = std::result::Result<T, MechanismError>;

/// Parametric effort-to-noise map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CurveFamily {
    /// `σ(e) = scale · (1 + e)^(−exponent)`
    PowerDecay { scale: f64, exponent: f64 },
    /// `σ(e) = scale · exp(−rate · e)`
    ExponentialDecay { scale: f64, rate: f64 },
}

/// A worker's known standard-deviation curve on a compact effort interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffortCurve {
    #[serde(flatten)]
    pub family: CurveFamily,
    pub effort_min: f64,
    pub effort_max: f64,
}

impl EffortCurve {
    pub fn power_decay(scale: f64, exponent: f64, effort_min: f64, effort_max: f64) -> Self {
        Self { family: CurveFamily::PowerDecay { scale, exponent }, effort_min, effort_max }
    }

    pub fn exponential_decay(scale: f64, rate: f64, effort_min: f64, effort_max: f64) -> Self {
        Self { family: CurveFamily::ExponentialDecay { scale, rate }, effort_min, effort_max }
    }

    /// Parameter checks plus a numeric certificate on a 1000-point grid:
    /// `σ > 0`, `σ′ < 0` and nonnegative second differences.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MechanismError::InvalidCurve(m));
        let (lo, hi) = (self.effort_min, self.effort_max);
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return bad(format!("effort interval [{lo}, {hi}] must satisfy 0 <= min < max < inf"));
        }
        match self.family {
            CurveFamily::PowerDecay { scale, exponent } => {
                if !(scale.is_finite() && scale > 0.0 && exponent.is_finite() && exponent > 0.0) {
                    return bad("power-decay needs scale > 0 and exponent > 0".into());
                }
            }
            CurveFamily::ExponentialDecay { scale, rate } => {
                if !(scale.is_finite() && scale > 0.0 && rate.is_finite() && rate > 0.0) {
                    return bad("exponential-decay needs scale > 0 and rate > 0".into());
                }
            }
        }
        const N: usize = 1000;
        let step = (hi - lo) / (N - 1) as f64;
        let grid: Vec<f64> = (0..N).map(|j| if j == N - 1 { hi } else { lo + step * j as f64 }).collect();
        let values: Vec<f64> = grid.iter().map(|&e| self.sigma(e)).collect();
        for (&e, &s) in grid.iter().zip(&values) {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma({e}) = {s} is not positive"));
            }
            let d = self.slope(e);
            if d.is_nan() || d >= 0.0 {
                return bad(format!("sigma'({e}) = {d} is not negative"));
            }
        }
        for w in values.windows(3) {
            let second = w[0] - 2.0 * w[1] + w[2];
            if second < -1e-12 * w[1] {
                return bad("sigma is not convex on the effort interval".into());
            }
        }
        Ok(())
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.effort_min && e <= self.effort_max
    }

    pub fn check(&self, e: f64) -> Result<()> {
        if self.contains(e) {
            Ok(())
        } else {
            Err(MechanismError::EffortOutOfRange { effort: e, min: self.effort_min, max: self.effort_max })
        }
    }

    pub fn clamp(&self, e: f64) -> f64 {
        e.clamp(self.effort_min, self.effort_max)
    }

    /// `σ(e)` without the domain check.
    pub fn sigma(&self, e: f64) -> f64 {
        match self.family {
            CurveFamily::PowerDecay { scale, exponent } => scale * (1.0 + e).powf(-exponent),
            CurveFamily::ExponentialDecay { scale, rate } => scale * (-rate * e).exp(),
        }
    }

    /// `σ′(e)` without the domain check.
    pub fn slope(&self, e: f64) -> f64 {
        match self.family {
            CurveFamily::PowerDecay { scale, exponent } => -scale * exponent * (1.0 + e).powf(-exponent - 1.0),
            CurveFamily::ExponentialDecay { scale, rate } => -rate * scale * (-rate * e).exp(),
        }
    }

    pub fn variance(&self, e: f64) -> f64 {
        let s = self.sigma(e);
        s * s
    }

    /// `(σ²)′(e) = 2 σ σ′`.
    pub fn variance_slope(&self, e: f64) -> f64 {
        2.0 * self.sigma(e) * self.slope(e)
    }
}

pub fn sigma_and_slope(curve: &EffortCurve, e: f64) -> Result<(f64, f64)> {
    curve.check(e)?;
    Ok((curve.sigma(e), curve.slope(e)))
}

/// `d = −1 / (2 σ(e) σ′(e))`, the slope that places the worker's first-order
/// condition at `e_target`.
pub fn payment_slope(curve: &EffortCurve, e_target: f64) -> Result<f64> {
    let (s, ds) = sigma_and_slope(curve, e_target)?;
    Ok(-1.0 / (2.0 * s * ds))
}

/// `c = d (σ² + G) + e`.
pub fn payment_intercept(slope: f64, own_variance: f64, peer_risk: f64, effort: f64) -> f64 {
    slope * (own_variance + peer_risk) + effort
}

/// Expected squared error at `points[i]` of the estimator fit on the other
/// points, given their noise levels. `sigmas[i]` is ignored.
pub fn peer_risk(spec: &EstimatorSpec, points: &[Point], i: usize, sigmas: &[f64]) -> Result<f64> {
    if sigmas.len() != points.len() || i >= points.len() {
        return Err(MechanismError::Inconsistent(format!(
            "peer risk for index {i} with {} points and {} sigmas",
            points.len(),
            sigmas.len()
        )));
    }
    let others: Vec<Point> = skip(points, i);
    let other_sigmas: Vec<f64> = skip(sigmas, i);
    let at_i = TestPointDistribution::point_mass(points[i].clone());
    let bundle = estimator::build_design(spec, &others, &at_i).map_err(|e| match e {
        EstimatorError::Singular | EstimatorError::EmptyDesign => EstimatorError::NotWellDefinedWithout { index: i },
        other => other,
    })?;
    Ok(mse_g(spec, &bundle, &other_sigmas)?)
}

fn skip<T: Clone>(xs: &[T], i: usize) -> Vec<T> {
    xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect()
}

/// A worker together with its publicly known effort curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub id: String,
    #[serde(flatten)]
    pub curve: EffortCurve,
}

impl Worker {
    pub fn new(id: impl Into<String>, curve: EffortCurve) -> Self {
        Self { id: id.into(), curve }
    }
}

/// Input to contract synthesis: who is hired, where, and at what target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub worker: Worker,
    pub point: Point,
    pub target_effort: f64,
    /// Weight of this worker's payment in the planner's objective.
    pub eta: f64,
}

/// One selected worker's terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractTerm {
    pub worker: Worker,
    pub point: Point,
    pub target_effort: f64,
    /// `d_i`
    pub slope: f64,
    /// `c_i`
    pub intercept: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub estimator: EstimatorSpec,
    pub distribution: TestPointDistribution,
    pub terms: Vec<ContractTerm>,
}

impl Contract {
    /// Payment coefficients inducing the engagements' target efforts.
    pub fn synthesize(
        estimator: EstimatorSpec,
        distribution: TestPointDistribution,
        engagements: Vec<Engagement>,
    ) -> Result<Self> {
        if !estimator.is_ordinary() {
            return Err(MechanismError::RidgeUnsupported);
        }
        estimator.validate()?;
        distribution.validate()?;
        for (a, e) in engagements.iter().enumerate() {
            e.worker.curve.validate()?;
            e.worker.curve.check(e.target_effort)?;
            if !(e.eta.is_finite() && e.eta > 0.0) {
                return Err(MechanismError::Inconsistent(format!("eta for {} must be positive", e.worker.id)));
            }
            if engagements[..a].iter().any(|o| o.worker.id == e.worker.id) {
                return Err(MechanismError::Inconsistent(format!("worker {} engaged twice", e.worker.id)));
            }
        }
        let points: Vec<Point> = engagements.iter().map(|e| e.point.clone()).collect();
        check_leave_one_out(&estimator, &points)?;
        let sigmas: Vec<f64> = engagements.iter().map(|e| e.worker.curve.sigma(e.target_effort)).collect();

        let mut terms = Vec::with_capacity(engagements.len());
        for (i, e) in engagements.into_iter().enumerate() {
            let slope = payment_slope(&e.worker.curve, e.target_effort)?;
            let g = peer_risk(&estimator, &points, i, &sigmas)?;
            let intercept = payment_intercept(slope, sigmas[i] * sigmas[i], g, e.target_effort);
            terms.push(ContractTerm {
                worker: e.worker,
                point: e.point,
                target_effort: e.target_effort,
                slope,
                intercept,
                eta: e.eta,
            });
        }
        Ok(Self { estimator, distribution, terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.terms.iter().map(|t| t.point.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.target_effort).collect()
    }

    /// Every worker at the bottom of their interval.
    pub fn min_profile(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.worker.curve.effort_min).collect()
    }

    pub fn max_profile(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.worker.curve.effort_max).collect()
    }

    fn check_profile(&self, efforts: &[f64]) -> Result<()> {
        if efforts.len() != self.len() {
            return Err(MechanismError::Inconsistent(format!(
                "effort profile has {} entries for {} workers",
                efforts.len(),
                self.len()
            )));
        }
        for (t, &e) in self.terms.iter().zip(efforts) {
            t.worker.curve.check(e)?;
        }
        Ok(())
    }

    fn sigmas(&self, efforts: &[f64]) -> Vec<f64> {
        self.terms.iter().zip(efforts).map(|(t, &e)| t.worker.curve.sigma(e)).collect()
    }

    /// `G₋ᵢ` with the others at `efforts` (entry `i` is ignored).
    pub fn peer_risk(&self, i: usize, efforts: &[f64]) -> Result<f64> {
        self.check_profile(efforts)?;
        peer_risk(&self.estimator, &self.points(), i, &self.sigmas(efforts))
    }

    /// Payments for one set of reports, aligned with `terms`.
    /// Payments can be negative.
    pub fn realized_payment(&self, reports: &[f64]) -> Result<Vec<f64>> {
        if reports.len() != self.len() {
            return Err(MechanismError::Inconsistent(format!("{} reports for {} workers", reports.len(), self.len())));
        }
        let points = self.points();
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let pred = loo_predict(&self.estimator, &points, reports, i)?;
                let r = reports[i] - pred;
                Ok(t.intercept - t.slope * r * r)
            })
            .collect()
    }

    /// Expected payment to worker `i` under the profile `efforts`.
    pub fn expected_payment(&self, i: usize, efforts: &[f64]) -> Result<f64> {
        self.check_profile(efforts)?;
        let t = &self.terms[i];
        let g = self.peer_risk(i, efforts)?;
        Ok(t.intercept - t.slope * (t.worker.curve.variance(efforts[i]) + g))
    }

    /// Expected payment minus effort for worker `i` playing `effort` while the
    /// others play `opponents` (entry `i` of `opponents` is ignored).
    pub fn analytic_utility(&self, i: usize, effort: f64, opponents: &[f64]) -> Result<f64> {
        let mut profile = opponents.to_vec();
        if i >= profile.len() {
            return Err(MechanismError::Inconsistent(format!("no worker at index {i}")));
        }
        profile[i] = effort;
        Ok(self.expected_payment(i, &profile)? - effort)
    }

    /// Unique maximizer of worker `i`'s expected utility.
    ///
    /// The utility derivative `−2 d σσ′(e) − 1` is strictly decreasing when
    /// `σ²` is strictly convex, so its sign change is bracketed and bisected.
    /// The peer-risk term shifts the utility by a constant and drops out.
    pub fn best_response(&self, i: usize, opponents: &[f64]) -> Result<f64> {
        let mut profile = opponents.to_vec();
        if i >= profile.len() {
            return Err(MechanismError::Inconsistent(format!("no worker at index {i}")));
        }
        let t = &self.terms[i];
        profile[i] = t.target_effort;
        self.check_profile(&profile)?;
        let curve = &t.worker.curve;
        let marginal = |e: f64| -t.slope * curve.variance_slope(e) - 1.0;
        Ok(decreasing_root(marginal, curve.effort_min, curve.effort_max))
    }

    /// Copy with every slope multiplied by `factor`.
    pub fn with_scaled_slopes(&self, factor: f64) -> Self {
        let mut c = self.clone();
        c.terms.iter_mut().for_each(|t| t.slope *= factor);
        c
    }

    /// Copy with `delta` added to every intercept.
    pub fn with_shifted_intercepts(&self, delta: f64) -> Self {
        let mut c = self.clone();
        c.terms.iter_mut().for_each(|t| t.intercept += delta);
        c
    }

    /// Prediction weights of each worker's leave-one-out fit at their own
    /// point: `f̂₋ᵢ(x_i) = Σ_j w[i][j] y_j` with `w[i][i] = 0`.
    pub fn loo_weights(&self) -> Result<Vec<Vec<f64>>> {
        let points = self.points();
        (0..points.len())
            .map(|i| {
                let others = skip(&points, i);
                let w = estimator::prediction_weights(&self.estimator, &others, &points[i])
                    .map_err(|_| EstimatorError::NotWellDefinedWithout { index: i })?;
                let mut full = w;
                full.insert(i, 0.0);
                Ok(full)
            })
            .collect()
    }
}

/// Root of a decreasing function on `[lo, hi]`, clamped to the endpoints.
/// Ties resolve toward the smaller effort.
pub(crate) fn decreasing_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if f(lo) <= 0.0 {
        return lo;
    }
    if f(hi) >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Per-worker verification record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerVerdict {
    pub worker: String,
    pub target_effort: f64,
    pub expected_payment: f64,
    pub utility_at_target: f64,
    /// Best responses against all-min, all-target and all-max opponents.
    pub best_responses: [f64; 3],
    /// Each best response beats every point of a 1001-point effort grid.
    pub grid_confirms_maximum: bool,
    pub unique_dominant: bool,
    pub individually_rational: bool,
    pub ir_tight: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub workers: Vec<WorkerVerdict>,
    pub dominant_strategy: bool,
    pub individually_rational: bool,
    pub ir_tight: bool,
    pub passed: bool,
}

const VERIFY_GRID: usize = 1001;

/// Analytic check that the target profile is the unique dominant-strategy
/// equilibrium with zero expected surplus. Failures are verdicts.
pub fn verify_contract(contract: &Contract) -> Result<UtilityReport> {
    let targets = contract.targets();
    let profiles = [contract.min_profile(), targets.clone(), contract.max_profile()];
    let mut workers = Vec::with_capacity(contract.len());
    for (i, t) in contract.terms.iter().enumerate() {
        let curve = &t.worker.curve;
        let mut best = [0.0; 3];
        let mut grid_ok = true;
        for (slot, opp) in profiles.iter().enumerate() {
            let br = contract.best_response(i, opp)?;
            best[slot] = br;
            let u_best = contract.analytic_utility(i, br, opp)?;
            let step = (curve.effort_max - curve.effort_min) / (VERIFY_GRID - 1) as f64;
            for j in 0..VERIFY_GRID {
                let e = curve.clamp(curve.effort_min + step * j as f64);
                let u = contract.analytic_utility(i, e, opp)?;
                if u > u_best + 1e-12 * (1.0 + u_best.abs()) {
                    grid_ok = false;
                }
            }
        }
        let agree = best.iter().all(|b| (b - best[0]).abs() <= EFFORT_TOLERANCE);
        let on_target = best.iter().all(|b| (b - t.target_effort).abs() <= EFFORT_TOLERANCE);
        let expected_payment = contract.expected_payment(i, &targets)?;
        let utility = expected_payment - t.target_effort;
        workers.push(WorkerVerdict {
            worker: t.worker.id.clone(),
            target_effort: t.target_effort,
            expected_payment,
            utility_at_target: utility,
            best_responses: best,
            grid_confirms_maximum: grid_ok,
            unique_dominant: agree && on_target && grid_ok,
            individually_rational: utility >= -UTILITY_TOLERANCE,
            ir_tight: utility.abs() <= UTILITY_TOLERANCE,
        });
    }
    let dominant_strategy = workers.iter().all(|w| w.unique_dominant);
    let individually_rational = workers.iter().all(|w| w.individually_rational);
    let ir_tight = workers.iter().all(|w| w.ir_tight);
    Ok(UtilityReport {
        workers,
        dominant_strategy,
        individually_rational,
        ir_tight,
        passed: dominant_strategy && ir_tight,
    })
}
