//! Linear-in-features least-squares estimators and their closed-form
//! expected squared error.
//!
//! For ordinary least squares with design matrix `Φ` (row `i` is `φ(x_i)`),
//! gram `G = ΦᵀΦ` and test-point second moment `M = E[φ(x*)φ(x*)ᵀ]`, the
//! expected squared prediction error is
//!
//! ```text
//! g(x, F, σ) = trace(M · G⁻¹ Φᵀ diag(σ²) Φ G⁻¹) = Σ_i h_i σ_i²,
//! h_i = φ(x_i)ᵀ G⁻¹ M G⁻¹ φ(x_i)
//! ```
//!
//! and does not depend on the true function. Ridge uses `G + λI` in place of
//! `G`; only its variance term is exposed here because the bias term depends
//! on the truth but not on the noise levels.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::linalg::{self, SpdFactor};
use crate::noise::{self, GroundTruth, NoiseModel};
use crate::stats::{self, Accumulator, Estimate};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("point has dimension {got}, feature map expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid feature map: {0}")]
    InvalidFeatureMap(String),
    #[error("invalid test-point distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid ridge parameter {0}; must be finite and >= 0")]
    InvalidRidge(f64),
    #[error("design has no points")]
    EmptyDesign,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("estimator undefined: gram matrix is singular (condition number above 1e10)")]
    Singular,
    #[error("estimator is not well-defined with example {index} removed")]
    NotWellDefinedWithout { index: usize },
    #[error("operation requires ordinary least squares, got ridge = {0}")]
    RequiresOrdinary(f64),
    #[error("operation requires a positive ridge parameter")]
    RequiresRidge,
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// A point of the input domain `R^n`.
///
/// Deserializes from either a bare number (one-dimensional inputs) or an
/// array.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::scalar(x)
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(f64),
            Vector(Vec<f64>),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Scalar(x) => Point(vec![x]),
            Repr::Vector(v) => Point(v),
        })
    }
}

/// Feature map `φ: R^n → R^m` defining the hypothesis class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap {
    /// All monomials of total degree at most `degree`, constant first, in
    /// graded lexicographic order. Over `R^1` this is `(1, x, …, x^d)`.
    Polynomial { degree: u32, input_dim: usize },
    /// Gaussian bumps `exp(-|x - c|² / (2 b²))` around a finite center set.
    Kernel { centers: Vec<Point>, bandwidth: f64 },
    /// Explicit monomial basis; each entry lists one exponent per input
    /// coordinate.
    Basis { input_dim: usize, exponents: Vec<Vec<u32>> },
}

impl FeatureMap {
    pub fn polynomial(degree: u32, input_dim: usize) -> Self {
        FeatureMap::Polynomial { degree, input_dim }
    }

    /// The one-feature map `φ(x) = 1`: estimates a constant.
    pub fn constant() -> Self {
        FeatureMap::polynomial(0, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EstimatorError::InvalidFeatureMap(m.to_string()));
        match self {
            FeatureMap::Polynomial { input_dim, degree } => {
                if *input_dim == 0 {
                    return bad("polynomial input_dim must be at least 1");
                }
                if *degree > 12 {
                    return bad("polynomial degree above 12 is not supported");
                }
            }
            FeatureMap::Kernel { centers, bandwidth } => {
                if centers.is_empty() {
                    return bad("kernel needs at least one center");
                }
                let n = centers[0].dim();
                if n == 0 || centers.iter().any(|c| c.dim() != n) {
                    return bad("kernel centers must share a nonzero dimension");
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return bad("kernel bandwidth must be positive");
                }
            }
            FeatureMap::Basis { input_dim, exponents } => {
                if *input_dim == 0 {
                    return bad("basis input_dim must be at least 1");
                }
                if exponents.is_empty() {
                    return bad("basis needs at least one feature");
                }
                if exponents.iter().any(|e| e.len() != *input_dim) {
                    return bad("every basis feature needs one exponent per input coordinate");
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Polynomial { input_dim, .. } | FeatureMap::Basis { input_dim, .. } => *input_dim,
            FeatureMap::Kernel { centers, .. } => centers.first().map_or(0, Point::dim),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Polynomial { degree, input_dim } => {
                binomial(*input_dim as u64 + *degree as u64, *degree as u64) as usize
            }
            FeatureMap::Kernel { centers, .. } => centers.len(),
            FeatureMap::Basis { exponents, .. } => exponents.len(),
        }
    }

    /// Evaluate `φ(x)`.
    pub fn feature_vector(&self, x: &Point) -> Result<Vec<f64>> {
        let n = self.input_dim();
        if x.dim() != n {
            return Err(EstimatorError::DimensionMismatch { expected: n, got: x.dim() });
        }
        Ok(match self {
            FeatureMap::Polynomial { degree, input_dim } => {
                monomials(*degree, *input_dim).iter().map(|e| monomial(x.coords(), e)).collect()
            }
            FeatureMap::Kernel { centers, bandwidth } => centers
                .iter()
                .map(|c| {
                    let d2: f64 = c.coords().iter().zip(x.coords()).map(|(a, b)| (a - b).powi(2)).sum();
                    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
                })
                .collect(),
            FeatureMap::Basis { exponents, .. } => exponents.iter().map(|e| monomial(x.coords(), e)).collect(),
        })
    }

    fn feature_dvector(&self, x: &Point) -> Result<DVector<f64>> {
        self.feature_vector(x).map(DVector::from_vec)
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn monomial(x: &[f64], exps: &[u32]) -> f64 {
    x.iter().zip(exps).map(|(v, &p)| v.powi(p as i32)).product()
}

/// Exponent tuples of total degree `<= degree` over `n` variables, ordered by
/// total degree and then lexicographically with the first variable highest.
fn monomials(degree: u32, n: usize) -> Vec<Vec<u32>> {
    fn fill(rest: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if idx + 1 == cur.len() {
            cur[idx] = rest;
            out.push(cur.clone());
            return;
        }
        for p in (0..=rest).rev() {
            cur[idx] = p;
            fill(rest - p, idx + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0; n];
        fill(total, 0, &mut cur, &mut out);
    }
    out
}

/// Finitely supported distribution of the test point `x*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPointDistribution {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl TestPointDistribution {
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let d = Self { support, weights };
        d.validate()?;
        Ok(d)
    }

    pub fn point_mass(x: Point) -> Self {
        Self { support: vec![x], weights: vec![1.0] }
    }

    pub fn uniform(support: Vec<Point>) -> Result<Self> {
        let w = 1.0 / support.len().max(1) as f64;
        let weights = vec![w; support.len()];
        // Equal weights can miss the sum by a few ulps; renormalize the last.
        let mut d = Self { support, weights };
        if let Some((_, head)) = d.weights.split_last() {
            let head: f64 = head.iter().sum();
            if let Some(last) = d.weights.last_mut() {
                *last = 1.0 - head;
            }
        }
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EstimatorError::InvalidDistribution(m));
        if self.support.is_empty() {
            return bad("support is empty".into());
        }
        if self.support.len() != self.weights.len() {
            return bad(format!("{} support points but {} weights", self.support.len(), self.weights.len()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and nonnegative".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {total}, expected 1"));
        }
        let n = self.support[0].dim();
        if self.support.iter().any(|p| p.dim() != n) {
            return bad("support points have mixed dimensions".into());
        }
        Ok(())
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the support point selected by a uniform draw `u ∈ [0, 1)`.
    pub(crate) fn index_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding gap above the last cumulative weight.
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// A feature map plus fit rule. `ridge == 0` is ordinary least squares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    #[serde(flatten)]
    pub features: FeatureMap,
    #[serde(default)]
    pub ridge: f64,
}

impl EstimatorSpec {
    pub fn ordinary(features: FeatureMap) -> Self {
        Self { features, ridge: 0.0 }
    }

    pub fn ridge(features: FeatureMap, lambda: f64) -> Self {
        Self { features, ridge: lambda }
    }

    pub fn is_ordinary(&self) -> bool {
        self.ridge == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(EstimatorError::InvalidRidge(self.ridge));
        }
        self.features.validate()
    }
}

/// Design matrix, gram and test-point second moment for a list of points.
#[derive(Clone, Debug)]
pub struct DesignBundle {
    pub points: Vec<Point>,
    /// `k × m`, row `i` is `φ(x_i)`.
    pub design: DMatrix<f64>,
    /// `ΦᵀΦ`.
    pub gram: DMatrix<f64>,
    /// `Σ_j w_j φ(x*_j) φ(x*_j)ᵀ`.
    pub second_moment: DMatrix<f64>,
}

impl DesignBundle {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn feature_vector(map: &FeatureMap, x: &Point) -> Result<Vec<f64>> {
    map.feature_vector(x)
}

fn design_matrix(map: &FeatureMap, points: &[Point]) -> Result<DMatrix<f64>> {
    let m = map.output_dim();
    let mut phi = DMatrix::zeros(points.len(), m);
    for (i, x) in points.iter().enumerate() {
        let row = map.feature_vector(x)?;
        for (j, v) in row.into_iter().enumerate() {
            phi[(i, j)] = v;
        }
    }
    Ok(phi)
}

fn second_moment(map: &FeatureMap, dist: &TestPointDistribution) -> Result<DMatrix<f64>> {
    let m = map.output_dim();
    let mut acc = DMatrix::zeros(m, m);
    for (x, w) in dist.support().iter().zip(dist.weights()) {
        let phi = map.feature_dvector(x)?;
        acc += (&phi * phi.transpose()) * *w;
    }
    Ok(acc)
}

/// Build `Φ`, `ΦᵀΦ` and `M`. Ordinary least squares requires a nonsingular
/// gram.
pub fn build_design(spec: &EstimatorSpec, points: &[Point], dist: &TestPointDistribution) -> Result<DesignBundle> {
    spec.validate()?;
    dist.validate()?;
    if points.is_empty() {
        return Err(EstimatorError::EmptyDesign);
    }
    let design = design_matrix(&spec.features, points)?;
    let gram = design.transpose() * &design;
    let second_moment = second_moment(&spec.features, dist)?;
    let bundle = DesignBundle { points: points.to_vec(), design, gram, second_moment };
    if spec.is_ordinary() {
        regularized_factor(spec, &bundle)?;
    }
    Ok(bundle)
}

fn regularized_factor(spec: &EstimatorSpec, bundle: &DesignBundle) -> Result<SpdFactor> {
    let m = bundle.gram.nrows();
    let g = &bundle.gram + DMatrix::identity(m, m) * spec.ridge;
    SpdFactor::new(&g).ok_or(EstimatorError::Singular)
}

fn check_sigmas(bundle: &DesignBundle, sigmas: &[f64]) -> Result<()> {
    if sigmas.len() != bundle.len() {
        return Err(EstimatorError::LengthMismatch { expected: bundle.len(), got: sigmas.len() });
    }
    Ok(())
}

/// `trace(M K⁻¹ Φᵀ diag(σ²) Φ K⁻¹)` with `K = G + λI = RᵀR`, evaluated as
/// `trace(M R⁻¹ (Wᵀ diag(σ²) W) R⁻ᵀ)` with `W = Φ R⁻¹`.
fn trace_form(spec: &EstimatorSpec, bundle: &DesignBundle, sigmas: &[f64]) -> Result<f64> {
    check_sigmas(bundle, sigmas)?;
    regularized_factor(spec, bundle)?;
    let r = linalg::design_r(&bundle.design, spec.ridge);
    let w_t = r.tr_solve_upper_triangular(&bundle.design.transpose()).ok_or(EstimatorError::Singular)?;
    let mut weighted = w_t.clone();
    for (i, s) in sigmas.iter().enumerate() {
        weighted.column_mut(i).scale_mut(s * s);
    }
    let inner = &weighted * w_t.transpose();
    let left = r.solve_upper_triangular(&inner).ok_or(EstimatorError::Singular)?;
    let core = r.solve_upper_triangular(&left.transpose()).ok_or(EstimatorError::Singular)?;
    let value = (&bundle.second_moment * core).trace();
    Ok(value.max(0.0))
}

/// `h_i = a_i M a_iᵀ` where `a_i` is row `i` of `Φ K⁻¹`.
fn row_sensitivities(spec: &EstimatorSpec, bundle: &DesignBundle) -> Result<Vec<f64>> {
    regularized_factor(spec, bundle)?;
    let r = linalg::design_r(&bundle.design, spec.ridge);
    // Aᵀ = K⁻¹ Φᵀ = R⁻¹ (R⁻ᵀ Φᵀ)
    let w_t = r.tr_solve_upper_triangular(&bundle.design.transpose()).ok_or(EstimatorError::Singular)?;
    let a_t = r.solve_upper_triangular(&w_t).ok_or(EstimatorError::Singular)?;
    Ok(a_t.column_iter().map(|col| (col.transpose() * &bundle.second_moment * col)[(0, 0)].max(0.0)).collect())
}

/// Expected squared prediction error of ordinary least squares.
pub fn mse_g(spec: &EstimatorSpec, bundle: &DesignBundle, sigmas: &[f64]) -> Result<f64> {
    if !spec.is_ordinary() {
        return Err(EstimatorError::RequiresOrdinary(spec.ridge));
    }
    trace_form(spec, bundle, sigmas)
}

/// Per-point weights `h` with `mse_g = Σ h_i σ_i²`.
pub fn sensitivity_h(spec: &EstimatorSpec, bundle: &DesignBundle) -> Result<Vec<f64>> {
    if !spec.is_ordinary() {
        return Err(EstimatorError::RequiresOrdinary(spec.ridge));
    }
    row_sensitivities(spec, bundle)
}

/// Variance part of the ridge expected squared error.
pub fn ridge_variance_g(spec: &EstimatorSpec, bundle: &DesignBundle, sigmas: &[f64]) -> Result<f64> {
    if spec.ridge <= 0.0 {
        return Err(EstimatorError::RequiresRidge);
    }
    trace_form(spec, bundle, sigmas)
}

/// Per-point weights of the ridge variance term.
pub fn ridge_sensitivity_h(spec: &EstimatorSpec, bundle: &DesignBundle) -> Result<Vec<f64>> {
    if spec.ridge <= 0.0 {
        return Err(EstimatorError::RequiresRidge);
    }
    row_sensitivities(spec, bundle)
}

/// The noise-dependent error term for either fit rule: `mse_g` for ordinary
/// least squares, the variance term for ridge.
pub fn variance_term(spec: &EstimatorSpec, bundle: &DesignBundle, sigmas: &[f64]) -> Result<f64> {
    if spec.is_ordinary() {
        mse_g(spec, bundle, sigmas)
    } else {
        ridge_variance_g(spec, bundle, sigmas)
    }
}

/// Sensitivities matching [`variance_term`].
pub fn variance_sensitivities(spec: &EstimatorSpec, bundle: &DesignBundle) -> Result<Vec<f64>> {
    if spec.is_ordinary() {
        sensitivity_h(spec, bundle)
    } else {
        ridge_sensitivity_h(spec, bundle)
    }
}

/// Fit on `(points, labels)` and evaluate at `query`.
pub fn fit_predict(spec: &EstimatorSpec, points: &[Point], labels: &[f64], query: &Point) -> Result<f64> {
    spec.validate()?;
    if points.is_empty() {
        return Err(EstimatorError::EmptyDesign);
    }
    if labels.len() != points.len() {
        return Err(EstimatorError::LengthMismatch { expected: points.len(), got: labels.len() });
    }
    let design = design_matrix(&spec.features, points)?;
    let m = design.ncols();
    let g = design.transpose() * &design + DMatrix::identity(m, m) * spec.ridge;
    let factor = SpdFactor::new(&g).ok_or(EstimatorError::Singular)?;
    let rhs = design.transpose() * DVector::from_column_slice(labels);
    let beta = factor.solve(&rhs);
    let phi = spec.features.feature_dvector(query)?;
    Ok(phi.dot(&beta))
}

/// Fit without example `index` and evaluate at that example's point.
pub fn loo_predict(spec: &EstimatorSpec, points: &[Point], labels: &[f64], index: usize) -> Result<f64> {
    if labels.len() != points.len() {
        return Err(EstimatorError::LengthMismatch { expected: points.len(), got: labels.len() });
    }
    if index >= points.len() {
        return Err(EstimatorError::LengthMismatch { expected: points.len(), got: index + 1 });
    }
    let (pts, ys) = without(points, labels, index);
    fit_predict(spec, &pts, &ys, &points[index]).map_err(|e| match e {
        EstimatorError::Singular | EstimatorError::EmptyDesign => EstimatorError::NotWellDefinedWithout { index },
        other => other,
    })
}

fn without(points: &[Point], labels: &[f64], index: usize) -> (Vec<Point>, Vec<f64>) {
    let pts = points.iter().enumerate().filter(|(j, _)| *j != index).map(|(_, p)| p.clone()).collect();
    let ys = labels.iter().enumerate().filter(|(j, _)| *j != index).map(|(_, y)| *y).collect();
    (pts, ys)
}

/// Check that the estimator stays defined with any single example removed.
pub fn check_leave_one_out(spec: &EstimatorSpec, points: &[Point]) -> Result<()> {
    spec.validate()?;
    if points.len() < 2 {
        return Err(EstimatorError::NotWellDefinedWithout { index: 0 });
    }
    for index in 0..points.len() {
        let reduced: Vec<Point> =
            points.iter().enumerate().filter(|(j, _)| *j != index).map(|(_, p)| p.clone()).collect();
        let design = design_matrix(&spec.features, &reduced)?;
        let m = design.ncols();
        let g = design.transpose() * &design + DMatrix::identity(m, m) * spec.ridge;
        if SpdFactor::new(&g).is_none() {
            return Err(EstimatorError::NotWellDefinedWithout { index });
        }
    }
    Ok(())
}

/// Weights `w` such that the fitted value at `query` is `Σ w_i y_i`.
///
/// Every estimator here is a linear smoother, so payments and prediction
/// errors can be evaluated without refitting per sample.
pub fn prediction_weights(spec: &EstimatorSpec, points: &[Point], query: &Point) -> Result<Vec<f64>> {
    spec.validate()?;
    if points.is_empty() {
        return Err(EstimatorError::EmptyDesign);
    }
    let design = design_matrix(&spec.features, points)?;
    let m = design.ncols();
    let g = design.transpose() * &design + DMatrix::identity(m, m) * spec.ridge;
    let factor = SpdFactor::new(&g).ok_or(EstimatorError::Singular)?;
    let phi = spec.features.feature_dvector(query)?;
    let w = &design * factor.solve(&phi);
    Ok(w.iter().copied().collect())
}

/// Sample count, seed and noise family for a Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub noise: NoiseModel,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64, noise: NoiseModel) -> Self {
        Self { samples, seed, noise }
    }
}

/// Monte Carlo estimate of `E[(f̂(x*) − f(x*))²]` by refitting on freshly
/// drawn labels `y_i = f(x_i) + ε_i` each replication.
pub fn monte_carlo_mse(
    spec: &EstimatorSpec,
    points: &[Point],
    dist: &TestPointDistribution,
    sigmas: &[f64],
    truth: &GroundTruth,
    mc: McConfig,
) -> Result<Estimate> {
    let bundle = build_design(spec, points, dist)?;
    check_sigmas(&bundle, sigmas)?;
    let factor = regularized_factor(spec, &bundle)?;
    let map = &spec.features;
    let truth_at_points: Vec<f64> = points.iter().map(|x| truth.eval(map, x)).collect();
    let support_phi: Vec<DVector<f64>> =
        dist.support().iter().map(|x| map.feature_dvector(x)).collect::<Result<_>>()?;
    let truth_at_support: Vec<f64> = dist.support().iter().map(|x| truth.eval(map, x)).collect();
    let design_t = bundle.design.transpose();

    let rows: Vec<Vec<Accumulator>> = stats::chunks(mc.samples)
        .into_par_iter()
        .map(|range| {
            let mut acc = Accumulator::new();
            let mut y = DVector::zeros(points.len());
            for ep in range {
                for (i, s) in sigmas.iter().enumerate() {
                    let mut rng = noise::stream(mc.seed, ep, noise::slot::noise(i));
                    y[i] = truth_at_points[i] + mc.noise.sample(*s, &mut rng);
                }
                let beta = factor.solve(&(&design_t * &y));
                let u: f64 = rand::Rng::random(&mut noise::stream(mc.seed, ep, noise::slot::TEST_POINT));
                let j = dist.index_for(u);
                let err = support_phi[j].dot(&beta) - truth_at_support[j];
                acc.push(err * err);
            }
            vec![acc]
        })
        .collect();
    Ok(stats::merge_rows(rows, 1)[0].estimate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::scalar(x)).collect()
    }

    fn ols(degree: u32) -> EstimatorSpec {
        EstimatorSpec::ordinary(FeatureMap::polynomial(degree, 1))
    }

    fn mass(x: f64) -> TestPointDistribution {
        TestPointDistribution::point_mass(Point::scalar(x))
    }

    // Independent route: expand the fit as explicit weights by brute-force
    // normal equations per query, then sum w_i² σ_i² over the support.
    fn oracle_mse(spec: &EstimatorSpec, points: &[Point], dist: &TestPointDistribution, sigmas: &[f64]) -> f64 {
        let k = points.len();
        let mut total = 0.0;
        for (q, w) in dist.support().iter().zip(dist.weights()) {
            // f̂(q) is linear in y; recover its weights by fitting unit label vectors.
            let mut var = 0.0;
            for i in 0..k {
                let mut e = vec![0.0; k];
                e[i] = 1.0;
                let wi = fit_predict(spec, points, &e, q).unwrap();
                var += wi * wi * sigmas[i] * sigmas[i];
            }
            total += w * var;
        }
        total
    }

    #[test]
    fn feature_vectors() {
        assert_eq!(ols(1).features.feature_vector(&Point::scalar(0.0)).unwrap(), vec![1.0, 0.0]);
        assert_eq!(ols(1).features.feature_vector(&Point::scalar(1.0)).unwrap(), vec![1.0, 1.0]);
        assert_eq!(ols(2).features.feature_vector(&Point::scalar(2.0)).unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn feature_dimension_mismatch() {
        let err = ols(1).features.feature_vector(&Point(vec![1.0, 2.0])).unwrap_err();
        assert_eq!(err, EstimatorError::DimensionMismatch { expected: 1, got: 2 });
    }

    #[test]
    fn multivariate_polynomial_layout() {
        let map = FeatureMap::polynomial(2, 2);
        assert_eq!(map.output_dim(), 6);
        let phi = map.feature_vector(&Point(vec![2.0, 3.0])).unwrap();
        // 1, x1, x2, x1², x1x2, x2²
        assert_eq!(phi, vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        let linear = FeatureMap::polynomial(1, 3);
        assert_eq!(linear.output_dim(), 4);
    }

    #[test]
    fn kernel_and_basis_maps() {
        let k = FeatureMap::Kernel { centers: pts(&[0.0, 1.0]), bandwidth: 1.0 };
        let phi = k.feature_vector(&Point::scalar(0.0)).unwrap();
        assert_eq!(phi[0], 1.0);
        assert!((phi[1] - (-0.5f64).exp()).abs() < 1e-15);
        let b = FeatureMap::Basis { input_dim: 1, exponents: vec![vec![0], vec![3]] };
        assert_eq!(b.feature_vector(&Point::scalar(2.0)).unwrap(), vec![1.0, 8.0]);
    }

    #[test]
    fn constant_design_gram() {
        let spec = EstimatorSpec::ordinary(FeatureMap::constant());
        let d = TestPointDistribution::uniform(pts(&[3.0, 9.0])).unwrap();
        let b = build_design(&spec, &pts(&[1.0, 2.0]), &d).unwrap();
        assert_eq!(b.gram[(0, 0)], 2.0);
        assert_eq!(b.second_moment[(0, 0)], 1.0);
    }

    #[test]
    fn linear_design_gram() {
        let b = build_design(&ols(1), &pts(&[0.0, 1.0]), &mass(0.5)).unwrap();
        assert_eq!(b.gram, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
        // oracle: φ(0.5) = (1, 0.5)
        assert_eq!(b.second_moment, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.25]));
    }

    #[test]
    fn duplicate_points_are_rank_deficient() {
        let err = build_design(&ols(1), &pts(&[0.0, 0.0]), &mass(0.5)).unwrap_err();
        assert_eq!(err, EstimatorError::Singular);
    }

    #[test]
    fn mse_examples() {
        let spec = EstimatorSpec::ordinary(FeatureMap::constant());
        let d = mass(0.0);
        let b = build_design(&spec, &pts(&[0.0, 0.0]), &d).unwrap();
        assert!((mse_g(&spec, &b, &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(mse_g(&spec, &b, &[0.0, 0.0]).unwrap(), 0.0);

        let b = build_design(&ols(1), &pts(&[0.0, 1.0]), &mass(0.5)).unwrap();
        let g = mse_g(&ols(1), &b, &[1.0, 1.0]).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
        assert!((g - oracle_mse(&ols(1), &b.points, &mass(0.5), &[1.0, 1.0])).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_examples() {
        let spec = EstimatorSpec::ordinary(FeatureMap::constant());
        let b = build_design(&spec, &pts(&[0.0, 0.0]), &mass(0.0)).unwrap();
        let h = sensitivity_h(&spec, &b).unwrap();
        assert!((h[0] - 0.25).abs() < 1e-12 && (h[1] - 0.25).abs() < 1e-12);

        let b = build_design(&ols(1), &pts(&[0.0, 1.0]), &mass(0.5)).unwrap();
        let h = sensitivity_h(&ols(1), &b).unwrap();
        assert!((h[0] - 0.25).abs() < 1e-12 && (h[1] - 0.25).abs() < 1e-12);

        let b = build_design(&ols(1), &pts(&[0.0, 1.0]), &mass(0.0)).unwrap();
        let h = sensitivity_h(&ols(1), &b).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-12 && h[1].abs() < 1e-12);
        // separability identity with unit σ vectors
        for i in 0..2 {
            let mut s = [0.0; 2];
            s[i] = 1.0;
            assert!((mse_g(&ols(1), &b, &s).unwrap() - h[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_examples() {
        let spec = EstimatorSpec::ridge(FeatureMap::constant(), 2.0);
        let b = build_design(&spec, &pts(&[0.0, 0.0]), &mass(0.0)).unwrap();
        assert!((ridge_variance_g(&spec, &b, &[1.0, 1.0]).unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(ridge_variance_g(&spec, &b, &[0.0, 0.0]).unwrap(), 0.0);

        let tiny = EstimatorSpec::ridge(FeatureMap::polynomial(1, 1), 1e-9);
        let b = build_design(&tiny, &pts(&[0.0, 1.0, 3.0]), &mass(0.5)).unwrap();
        let sig = [1.0, 0.5, 2.0];
        let r = ridge_variance_g(&tiny, &b, &sig).unwrap();
        let g = mse_g(&ols(1), &b, &sig).unwrap();
        assert!((r - g).abs() < 1e-6);
        assert_eq!(mse_g(&tiny, &b, &sig).unwrap_err(), EstimatorError::RequiresOrdinary(1e-9));
        assert_eq!(ridge_variance_g(&ols(1), &b, &sig).unwrap_err(), EstimatorError::RequiresRidge);
    }

    #[test]
    fn fit_predict_examples() {
        let c = EstimatorSpec::ordinary(FeatureMap::constant());
        assert!((fit_predict(&c, &pts(&[0.0, 7.0]), &[3.0, 5.0], &Point::scalar(-2.0)).unwrap() - 4.0).abs() < 1e-12);
        assert!(
            (fit_predict(&ols(1), &pts(&[0.0, 1.0]), &[1.0, 3.0], &Point::scalar(0.5)).unwrap() - 2.0).abs() < 1e-12
        );
        assert!(
            (fit_predict(&ols(1), &pts(&[0.0, 1.0, 2.0]), &[0.0, 1.0, 2.0], &Point::scalar(5.0)).unwrap() - 5.0).abs()
                < 1e-12
        );
        assert_eq!(
            fit_predict(&ols(1), &pts(&[1.0, 1.0]), &[0.0, 1.0], &Point::scalar(0.0)).unwrap_err(),
            EstimatorError::Singular
        );
    }

    #[test]
    fn loo_examples() {
        let c = EstimatorSpec::ordinary(FeatureMap::constant());
        assert_eq!(loo_predict(&c, &pts(&[0.0, 0.0]), &[1.5, -2.0], 0).unwrap(), -2.0);
        assert!((loo_predict(&ols(1), &pts(&[0.0, 1.0, 2.0]), &[0.0, 1.0, 4.0], 2).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(
            loo_predict(&ols(1), &pts(&[0.0, 1.0]), &[0.0, 1.0], 1).unwrap_err(),
            EstimatorError::NotWellDefinedWithout { index: 1 }
        );
        assert!(check_leave_one_out(&ols(1), &pts(&[0.0, 1.0])).is_err());
        assert!(check_leave_one_out(&ols(1), &pts(&[0.0, 1.0, 2.0])).is_ok());
        assert_eq!(
            check_leave_one_out(&ols(1), &pts(&[0.0, 1.0, 1.0])).unwrap_err(),
            EstimatorError::NotWellDefinedWithout { index: 0 }
        );
    }

    #[test]
    fn loo_matches_explicit_reduction_bitwise() {
        let p = pts(&[0.0, 0.3, 1.1, 2.0]);
        let y = [0.2, -1.0, 0.7, 3.3];
        for i in 0..p.len() {
            let (rp, ry) = without(&p, &y, i);
            let direct = fit_predict(&ols(2), &rp, &ry, &p[i]).unwrap();
            assert_eq!(loo_predict(&ols(2), &p, &y, i).unwrap().to_bits(), direct.to_bits());
        }
    }

    #[test]
    fn prediction_weights_match_fit() {
        let p = pts(&[0.0, 0.4, 1.0, 2.5]);
        let y = [1.0, 2.0, -0.5, 0.25];
        let q = Point::scalar(1.7);
        for spec in [ols(2), EstimatorSpec::ridge(FeatureMap::polynomial(2, 1), 0.3)] {
            let w = prediction_weights(&spec, &p, &q).unwrap();
            let lin: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((lin - fit_predict(&spec, &p, &y, &q).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_examples() {
        let c = EstimatorSpec::ordinary(FeatureMap::constant());
        let p = pts(&[0.0, 0.0]);
        let f = GroundTruth::new(vec![2.5]);
        let zero =
            monte_carlo_mse(&c, &p, &mass(0.0), &[0.0, 0.0], &f, McConfig::new(100, 1, NoiseModel::Gaussian)).unwrap();
        assert!(zero.mean <= 1e-24);

        let g = monte_carlo_mse(&c, &p, &mass(0.0), &[1.0, 1.0], &f, McConfig::new(100_000, 2, NoiseModel::Gaussian))
            .unwrap();
        assert!(g.within(0.5, 3.0), "{g:?}");
        let u = monte_carlo_mse(
            &c,
            &p,
            &mass(0.0),
            &[1.0, 1.0],
            &f,
            McConfig::new(100_000, 3, NoiseModel::CenteredUniform),
        )
        .unwrap();
        let joint = (g.std_error.powi(2) + u.std_error.powi(2)).sqrt();
        assert!((g.mean - u.mean).abs() <= 3.0 * joint);
    }

    #[test]
    fn distribution_validation() {
        assert!(TestPointDistribution::new(vec![], vec![]).is_err());
        assert!(TestPointDistribution::new(pts(&[0.0, 1.0]), vec![0.5, 0.6]).is_err());
        assert!(TestPointDistribution::new(pts(&[0.0, 1.0]), vec![-0.5, 1.5]).is_err());
        let d = TestPointDistribution::uniform(pts(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(d.index_for(0.0), 0);
        assert_eq!(d.index_for(0.5), 1);
        assert_eq!(d.index_for(0.999_999), 2);
    }

    #[test]
    fn point_deserializes_from_scalar_or_array() {
        let a: Vec<Point> = serde_json::from_str("[1.5, [2.0, 3.0]]").unwrap();
        assert_eq!(a, vec![Point::scalar(1.5), Point(vec![2.0, 3.0])]);
    }
}
