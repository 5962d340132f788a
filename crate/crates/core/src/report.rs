//! Report files written by the command-line front end. Reports carry no
//! timestamps or host details, so the same inputs give byte-identical files.

use serde::{Deserialize, Serialize};

use crate::estimator::Point;
use crate::mechanism::{Contract, UtilityReport};
use crate::optimizer::Plan;
use crate::simulator::{BestResponseCurve, ObjectiveEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractRow {
    pub worker: String,
    pub point: Point,
    pub target_effort: f64,
    /// `d_i`
    pub slope: f64,
    /// `c_i`
    pub intercept: f64,
    pub eta: f64,
}

impl ContractRow {
    pub fn rows(contract: &Contract) -> Vec<Self> {
        contract
            .terms
            .iter()
            .map(|t| ContractRow {
                worker: t.worker.id.clone(),
                point: t.point.clone(),
                target_effort: t.target_effort,
                slope: t.slope,
                intercept: t.intercept,
                eta: t.eta,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub profile: String,
    pub noise: String,
    /// Value of the lower-bound objective for the plan's targets.
    pub plan_value: f64,
    pub estimate: ObjectiveEstimate,
    /// Closed-form expected utility per worker, for deterministic profiles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_utilities: Option<Vec<f64>>,
    pub best_response: Vec<BestResponseCurve>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub objective: f64,
    pub total_effort: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    pub scenario_digest: String,
    pub strategy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract: Option<Vec<ContractRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, scenario_digest: String, strategy: String) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario_digest,
            strategy,
            plan: None,
            contract: None,
            utility: None,
            simulation: None,
            sweep: None,
            verdicts: Vec::new(),
            passed: true,
        }
    }

    pub fn push(&mut self, verdict: Verdict) {
        self.passed &= verdict.passed;
        self.verdicts.push(verdict);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
