//! Scenario files: a TOML description of workers, points, the test-point
//! distribution, the objective, and (for simulation) the environment.
//!
//! ```toml
//! [estimator]
//! kind = "polynomial"      # polynomial | kernel | basis
//! degree = 1
//! input_dim = 1
//! ridge = 0.0              # optional, > 0 for ridge regression
//!
//! [[workers]]
//! id = "a"
//! family = "power-decay"   # power-decay (scale, exponent) | exponential-decay (scale, rate)
//! scale = 1.0
//! exponent = 0.5
//! effort_min = 0.0
//! effort_max = 4.0
//!
//! [points]
//! fixed = [0.0, 1.0]       # or: candidates = [...], max_selected = 3
//!
//! [distribution]
//! support = [0.0, 1.0]
//! weights = [0.5, 0.5]     # optional, uniform by default
//!
//! [objective]
//! eta = 0.1                # or: etas = [...], or: budget = 2.0
//!
//! [simulation]             # optional
//! noise = "gaussian"
//! n = 10000
//! seed = 0
//!
//! [ground_truth]           # optional, needed by `simulate`
//! coefficients = [0.5, -1.0]
//! ```
//!
//! Points are scalars or arrays. Every error from loading names a line.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::estimator::{EstimatorSpec, FeatureMap, Point, TestPointDistribution};
use crate::mechanism::{CurveFamily, EffortCurve, Worker};
use crate::noise::{GroundTruth, NoiseModel};
use crate::optimizer::{EtaWeights, Objective, PlanProblem, PointSet};
use crate::simulator::Environment;

/// Episodes simulated when neither the file nor the caller says otherwise.
pub const DEFAULT_EPISODES: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioError {
    /// 1-based line in the scenario file.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub noise: NoiseModel,
    pub episodes: u64,
    pub seed: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { noise: NoiseModel::Gaussian, episodes: DEFAULT_EPISODES, seed: 0 }
    }
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub problem: PlanProblem,
    pub simulation: SimulationSettings,
    pub truth: Option<GroundTruth>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        raw.validate(text)
    }

    /// SHA-256 of the scenario's canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn environment(&self) -> Option<Environment> {
        self.truth.clone().map(|t| Environment::new(t, self.simulation.noise))
    }

    /// The scenario as a file that loads back to an identical scenario.
    pub fn to_toml(&self) -> String {
        let p = &self.problem;
        let estimator = match &p.estimator.features {
            FeatureMap::Polynomial { degree, input_dim } => RawEstimator {
                kind: "polynomial".into(),
                degree: Some(*degree),
                input_dim: Some(*input_dim),
                ..RawEstimator::default()
            },
            FeatureMap::Kernel { centers, bandwidth } => RawEstimator {
                kind: "kernel".into(),
                centers: Some(centers.clone()),
                bandwidth: Some(*bandwidth),
                ..RawEstimator::default()
            },
            FeatureMap::Basis { input_dim, exponents } => RawEstimator {
                kind: "basis".into(),
                input_dim: Some(*input_dim),
                exponents: Some(exponents.clone()),
                ..RawEstimator::default()
            },
        };
        let estimator = RawEstimator { ridge: (p.estimator.ridge != 0.0).then_some(p.estimator.ridge), ..estimator };
        let workers = p
            .workers
            .iter()
            .map(|w| {
                let (family, scale, exponent, rate) = match w.curve.family {
                    CurveFamily::PowerDecay { scale, exponent } => ("power-decay", scale, Some(exponent), None),
                    CurveFamily::ExponentialDecay { scale, rate } => ("exponential-decay", scale, None, Some(rate)),
                };
                Spanned::new(
                    0..0,
                    RawWorker {
                        id: Spanned::new(0..0, w.id.clone()),
                        family: family.into(),
                        scale,
                        exponent,
                        rate,
                        effort_min: w.curve.effort_min,
                        effort_max: w.curve.effort_max,
                    },
                )
            })
            .collect();
        let points = match &p.points {
            PointSet::Fixed(f) => RawPoints { fixed: Some(f.clone()), ..RawPoints::default() },
            PointSet::Candidates { points, max_selected, min_selected, distinct } => RawPoints {
                candidates: Some(points.clone()),
                max_selected: Some(*max_selected),
                min_selected: *min_selected,
                distinct: distinct.then_some(true),
                ..RawPoints::default()
            },
        };
        let objective = match &p.objective {
            Objective::Weighted(EtaWeights::Uniform(eta)) => {
                RawObjective { eta: Some(*eta), ..RawObjective::default() }
            }
            Objective::Weighted(EtaWeights::PerWorker(etas)) => {
                RawObjective { etas: Some(etas.clone()), ..RawObjective::default() }
            }
            Objective::Budget { budget, calibration_eta } => {
                RawObjective { budget: Some(*budget), calibration_eta: *calibration_eta, ..RawObjective::default() }
            }
        };
        let raw = RawScenario {
            estimator: Spanned::new(0..0, estimator),
            workers,
            points: Spanned::new(0..0, points),
            distribution: Spanned::new(
                0..0,
                RawDistribution {
                    support: p.distribution.support().to_vec(),
                    weights: Some(p.distribution.weights().to_vec()),
                },
            ),
            objective: Spanned::new(0..0, objective),
            simulation: Some(Spanned::new(
                0..0,
                RawSimulation {
                    noise: Some(self.simulation.noise),
                    n: Some(self.simulation.episodes),
                    seed: Some(self.simulation.seed),
                },
            )),
            ground_truth: self
                .truth
                .as_ref()
                .map(|t| Spanned::new(0..0, RawTruth { coefficients: t.coefficients.clone() })),
        };
        toml::to_string(&raw).expect("scenario serializes to TOML")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    centers: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exponents: Option<Vec<Vec<u32>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ridge: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorker {
    id: Spanned<String>,
    family: String,
    scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    effort_min: f64,
    effort_max: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoints {
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_selected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_selected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distinct: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    support: Vec<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    etas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_eta: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    coefficients: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    estimator: Spanned<RawEstimator>,
    workers: Vec<Spanned<RawWorker>>,
    points: Spanned<RawPoints>,
    distribution: Spanned<RawDistribution>,
    objective: Spanned<RawObjective>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<Spanned<RawSimulation>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Spanned<RawTruth>>,
}

impl RawScenario {
    fn validate(self, text: &str) -> Result<Scenario, ScenarioError> {
        let at = |span: Range<usize>| {
            let line = line_of(text, span.start);
            move |message: String| ScenarioError { line: Some(line), message }
        };

        let est_err = at(self.estimator.span());
        let features = self.estimator.get_ref().features().map_err(&est_err)?;
        let estimator = EstimatorSpec { features, ridge: self.estimator.get_ref().ridge.unwrap_or(0.0) };
        estimator.validate().map_err(|e| est_err(e.to_string()))?;

        if self.workers.is_empty() {
            return Err(ScenarioError { line: None, message: "at least one [[workers]] entry is required".into() });
        }
        let mut workers: Vec<Worker> = Vec::with_capacity(self.workers.len());
        for w in &self.workers {
            let err = at(w.span());
            let w = w.get_ref();
            let id = w.id.get_ref();
            if workers.iter().any(|o| &o.id == id) {
                return Err(at(w.id.span())(format!("duplicate worker id \"{id}\"")));
            }
            let family = match (w.family.as_str(), w.exponent, w.rate) {
                ("power-decay", Some(exponent), None) => CurveFamily::PowerDecay { scale: w.scale, exponent },
                ("exponential-decay", None, Some(rate)) => CurveFamily::ExponentialDecay { scale: w.scale, rate },
                ("power-decay", ..) => return Err(err("power-decay takes `exponent` and no `rate`".into())),
                ("exponential-decay", ..) => {
                    return Err(err("exponential-decay takes `rate` and no `exponent`".into()))
                }
                (other, ..) => return Err(err(format!("unknown curve family \"{other}\""))),
            };
            let curve = EffortCurve { family, effort_min: w.effort_min, effort_max: w.effort_max };
            curve.validate().map_err(|e| err(format!("worker \"{id}\": {e}")))?;
            workers.push(Worker::new(id.clone(), curve));
        }

        let dim = estimator.features.input_dim();
        let check_dims = |pts: &[Point], what: &str, err: &dyn Fn(String) -> ScenarioError| match pts
            .iter()
            .find(|p| p.dim() != dim)
        {
            Some(p) => Err(err(format!("{what} point {:?} has dimension {}, expected {dim}", p.0, p.dim()))),
            None => Ok(()),
        };

        let pts_err = at(self.points.span());
        let raw_points = self.points.into_inner();
        let points = match (raw_points.fixed, raw_points.candidates) {
            (Some(fixed), None) => {
                if raw_points.max_selected.is_some()
                    || raw_points.min_selected.is_some()
                    || raw_points.distinct.is_some()
                {
                    return Err(pts_err("max_selected, min_selected and distinct apply to candidates only".into()));
                }
                check_dims(&fixed, "fixed", &pts_err)?;
                PointSet::Fixed(fixed)
            }
            (None, Some(candidates)) => {
                check_dims(&candidates, "candidate", &pts_err)?;
                let max_selected =
                    raw_points.max_selected.ok_or_else(|| pts_err("candidates need max_selected".into()))?;
                PointSet::Candidates {
                    points: candidates,
                    max_selected,
                    min_selected: raw_points.min_selected,
                    distinct: raw_points.distinct.unwrap_or(false),
                }
            }
            _ => return Err(pts_err("give exactly one of `fixed` or `candidates`".into())),
        };

        let dist_err = at(self.distribution.span());
        let raw_dist = self.distribution.into_inner();
        check_dims(&raw_dist.support, "support", &dist_err)?;
        let distribution = match raw_dist.weights {
            Some(w) => TestPointDistribution::new(raw_dist.support, w),
            None => TestPointDistribution::uniform(raw_dist.support),
        }
        .map_err(|e| dist_err(e.to_string()))?;

        let obj_err = at(self.objective.span());
        let o = self.objective.into_inner();
        let objective = match (o.eta, o.etas, o.budget) {
            (Some(eta), None, None) if o.calibration_eta.is_none() => Objective::Weighted(EtaWeights::Uniform(eta)),
            (None, Some(etas), None) if o.calibration_eta.is_none() => Objective::Weighted(EtaWeights::PerWorker(etas)),
            (None, None, Some(budget)) => Objective::Budget { budget, calibration_eta: o.calibration_eta },
            _ => {
                return Err(obj_err(
                    "give exactly one of `eta`, `etas` or `budget` (calibration_eta only with budget)".into(),
                ))
            }
        };

        let problem = PlanProblem { workers, points, estimator, distribution, objective };
        problem.validate().map_err(|e| {
            use crate::optimizer::OptimizeError as E;
            match e {
                E::NoPoints | E::TooFewWorkers { .. } => pts_err(e.to_string()),
                E::InvalidProblem(ref m) if m.contains("eta") || m.contains("budget") => obj_err(e.to_string()),
                _ => ScenarioError { line: None, message: e.to_string() },
            }
        })?;

        let simulation = match self.simulation {
            None => SimulationSettings::default(),
            Some(s) => {
                let err = at(s.span());
                let s = s.into_inner();
                let episodes = s.n.unwrap_or(DEFAULT_EPISODES);
                if episodes < 2 {
                    return Err(err("simulation needs n >= 2".into()));
                }
                SimulationSettings { noise: s.noise.unwrap_or_default(), episodes, seed: s.seed.unwrap_or(0) }
            }
        };

        let truth = match self.ground_truth {
            None => None,
            Some(t) => {
                let err = at(t.span());
                let t = GroundTruth::new(t.into_inner().coefficients);
                let env = Environment::new(t.clone(), simulation.noise);
                env.validate(&problem.estimator.features).map_err(|e| err(e.to_string()))?;
                Some(t)
            }
        };
        Ok(Scenario { problem, simulation, truth })
    }
}

impl RawEstimator {
    fn features(&self) -> Result<FeatureMap, String> {
        let unexpected = |names: &[(&str, bool)]| -> Result<(), String> {
            match names.iter().find(|(_, present)| *present) {
                Some((n, _)) => Err(format!("`{n}` does not apply to kind \"{}\"", self.kind)),
                None => Ok(()),
            }
        };
        match self.kind.as_str() {
            "polynomial" => {
                unexpected(&[
                    ("centers", self.centers.is_some()),
                    ("bandwidth", self.bandwidth.is_some()),
                    ("exponents", self.exponents.is_some()),
                ])?;
                Ok(FeatureMap::Polynomial {
                    degree: self.degree.ok_or("polynomial needs `degree`")?,
                    input_dim: self.input_dim.unwrap_or(1),
                })
            }
            "kernel" => {
                unexpected(&[
                    ("degree", self.degree.is_some()),
                    ("input_dim", self.input_dim.is_some()),
                    ("exponents", self.exponents.is_some()),
                ])?;
                Ok(FeatureMap::Kernel {
                    centers: self.centers.clone().ok_or("kernel needs `centers`")?,
                    bandwidth: self.bandwidth.ok_or("kernel needs `bandwidth`")?,
                })
            }
            "basis" => {
                unexpected(&[
                    ("degree", self.degree.is_some()),
                    ("centers", self.centers.is_some()),
                    ("bandwidth", self.bandwidth.is_some()),
                ])?;
                Ok(FeatureMap::Basis {
                    input_dim: self.input_dim.unwrap_or(1),
                    exponents: self.exponents.clone().ok_or("basis needs `exponents`")?,
                })
            }
            other => Err(format!("unknown estimator kind \"{other}\"")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = r#"
[estimator]
kind = "polynomial"
degree = 0

[[workers]]
id = "a"
family = "power-decay"
scale = 1.0
exponent = 0.5
effort_min = 0.0
effort_max = 4.0

[[workers]]
id = "b"
family = "power-decay"
scale = 1.0
exponent = 0.5
effort_min = 0.0
effort_max = 4.0

[points]
fixed = [0.0, 0.0]

[distribution]
support = [0.0]

[objective]
eta = 0.0625
"#;

    #[test]
    fn loads_worked_scenario() {
        let s = Scenario::parse(WORKED).unwrap();
        assert_eq!(s.problem.workers.len(), 2);
        assert_eq!(s.problem.estimator.features, FeatureMap::constant());
        assert_eq!(s.simulation, SimulationSettings::default());
        assert!(s.truth.is_none());
    }

    #[test]
    fn round_trip_keeps_digest() {
        let s = Scenario::parse(WORKED).unwrap();
        let again = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.digest(), again.digest());
    }

    #[test]
    fn duplicate_id_names_line_and_id() {
        let text = WORKED.replace("id = \"b\"", "id = \"a\"");
        let err = Scenario::parse(&text).unwrap_err();
        assert!(err.message.contains("duplicate worker id \"a\""), "{err}");
        assert_eq!(err.line, Some(15));
    }

    #[test]
    fn syntax_and_schema_errors_have_lines() {
        let err = Scenario::parse(&WORKED.replace("degree = 0", "degree = \"x\"")).unwrap_err();
        assert_eq!(err.line, Some(4));
        let err = Scenario::parse(&WORKED.replace("effort_max = 4.0", "effort_max = -1.0")).unwrap_err();
        assert_eq!(err.line, Some(6));
        let err = Scenario::parse(&WORKED.replace("eta = 0.0625", "eta = 0.1\nbudget = 1.0")).unwrap_err();
        assert_eq!(err.line, Some(28));
        let err = Scenario::parse(&WORKED.replace("support = [0.0]", "support = [[0.0, 1.0]]")).unwrap_err();
        assert_eq!(err.line, Some(25));
    }

    #[test]
    fn truth_dimension_checked() {
        let text = format!("{WORKED}\n[ground_truth]\ncoefficients = [1.0, 2.0]\n");
        let err = Scenario::parse(&text).unwrap_err();
        assert!(err.message.contains("coefficients"), "{err}");
        assert!(err.line.is_some());
    }
}
