//! The `esw` command line: solve, verify, simulate and sweep a scenario file.
//!
//! Exit codes: 0 when every verdict passes, 2 for input errors, 3 when a
//! verification verdict fails, 4 when the problem is infeasible.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::estimator::EstimatorError;
use crate::mechanism::{verify_contract, Contract, MechanismError};
use crate::optimizer::{self, EtaWeights, Objective, OptimizeError, Plan, SearchStrategy};
use crate::report::{ContractRow, Report, SimulationSummary, SweepRow, Verdict};
use crate::scenario::Scenario;
use crate::simulator::{
    effort_grid, empirical_best_response, estimate_objective, EffortPolicy, SimError, StrategyProfile,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_VAR: &str = "ESW_OUT_DIR";

/// Effort grid used for the best-response tables.
pub const TABLE_GRID: usize = 41;

/// Standard errors allowed between an estimate and its analytic value.
const N_SE: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(name = "esw", version, about = "Optimal payment contracts for estimation with strategic workers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Report path; defaults to `<scenario>.<command>.json` in $ESW_OUT_DIR
    /// or the current directory. Tables go next to it with a `.tsv` extension.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Point-selection strategy for candidate sets.
    #[arg(long, global = true, value_enum, default_value_t = StrategyArg::Exhaustive)]
    pub strategy: StrategyArg,
    /// Seed for simulation and local search; defaults to the scenario's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Multiply every payment slope after synthesis.
    #[arg(long, global = true)]
    pub tamper_slope: Option<f64>,
    /// Add to every payment intercept after synthesis.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tamper_intercept: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Exhaustive,
    LocalSearch,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal plan and its contract.
    Solve { scenario: PathBuf },
    /// Closed-form check of dominant strategy and zero surplus.
    Verify { scenario: PathBuf },
    /// Monte Carlo play of the contract.
    Simulate {
        scenario: PathBuf,
        /// target | min | max | uniform | best-response | fixed:<effort>
        #[arg(long, default_value = "target")]
        profile: ProfileArg,
        /// Episodes (default: the scenario's, else 10000).
        #[arg(long)]
        n: Option<u64>,
    },
    /// Re-solve across a range of eta or budget values.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// START:END:STEPS, evenly spaced and inclusive.
        #[arg(long)]
        range: RangeArg,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Eta,
    Budget,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileArg {
    Target,
    Min,
    Max,
    Uniform,
    BestResponse,
    Fixed(f64),
}

impl FromStr for ProfileArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "target" => ProfileArg::Target,
            "min" => ProfileArg::Min,
            "max" => ProfileArg::Max,
            "uniform" => ProfileArg::Uniform,
            "best-response" => ProfileArg::BestResponse,
            _ => match s.strip_prefix("fixed:") {
                Some(e) => ProfileArg::Fixed(e.parse().map_err(|_| format!("bad effort in profile {s:?}"))?),
                None => return Err(format!("unknown profile {s:?}")),
            },
        })
    }
}

impl std::fmt::Display for ProfileArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProfileArg::Target => f.write_str("target"),
            ProfileArg::Min => f.write_str("min"),
            ProfileArg::Max => f.write_str("max"),
            ProfileArg::Uniform => f.write_str("uniform"),
            ProfileArg::BestResponse => f.write_str("best-response"),
            ProfileArg::Fixed(e) => write!(f, "fixed:{e}"),
        }
    }
}

impl ProfileArg {
    pub fn profile(&self, contract: &Contract) -> StrategyProfile {
        let k = contract.len();
        match *self {
            ProfileArg::Target => StrategyProfile::target(k),
            ProfileArg::Min => StrategyProfile::fixed(&contract.min_profile()),
            ProfileArg::Max => StrategyProfile::fixed(&contract.max_profile()),
            ProfileArg::Uniform => StrategyProfile::uniform(EffortPolicy::UniformRandom, k),
            ProfileArg::BestResponse => StrategyProfile::uniform(EffortPolicy::BestResponseEmpirical, k),
            ProfileArg::Fixed(e) => StrategyProfile::uniform(EffortPolicy::Fixed(e), k),
        }
    }

    /// Efforts when the profile is deterministic and known up front.
    fn efforts(&self, contract: &Contract) -> Option<Vec<f64>> {
        match *self {
            ProfileArg::Target => Some(contract.targets()),
            ProfileArg::Min => Some(contract.min_profile()),
            ProfileArg::Max => Some(contract.max_profile()),
            ProfileArg::Fixed(e) => Some(vec![e; contract.len()]),
            ProfileArg::Uniform | ProfileArg::BestResponse => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeArg {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl RangeArg {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|j| if j == self.steps - 1 { self.end } else { self.start + step * j as f64 }).collect()
    }
}

impl FromStr for RangeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, k] = parts.as_slice() else {
            return Err(format!("range {s:?} is not START:END:STEPS"));
        };
        let start: f64 = a.parse().map_err(|_| format!("bad range start {a:?}"))?;
        let end: f64 = b.parse().map_err(|_| format!("bad range end {b:?}"))?;
        let steps: usize = k.parse().map_err(|_| format!("bad step count {k:?}"))?;
        if !(start.is_finite() && end.is_finite() && start > 0.0 && end >= start && steps >= 1) {
            return Err(format!("range {s:?} must be finite, positive and increasing with at least one step"));
        }
        Ok(Self { start, end, steps })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        let code = match &e {
            OptimizeError::InfeasibleBudget { .. } | OptimizeError::NoFeasibleDesign => EXIT_INFEASIBLE,
            OptimizeError::Estimator(inner) => return estimator_error(inner, e.to_string()),
            _ => EXIT_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

fn estimator_error(e: &EstimatorError, message: String) -> CliError {
    let code = match e {
        EstimatorError::Singular | EstimatorError::NotWellDefinedWithout { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    };
    CliError { code, message }
}

impl From<MechanismError> for CliError {
    fn from(e: MechanismError) -> Self {
        match &e {
            MechanismError::Estimator(inner) => estimator_error(inner, e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Mechanism(m) => m.into(),
            SimError::Estimator(ref inner) => estimator_error(inner, e.to_string()),
            other => CliError::input(other.to_string()),
        }
    }
}

/// A finished command: the report, an optional table, and where they go.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub table: Option<String>,
    pub report_path: PathBuf,
    pub table_path: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            EXIT_OK
        } else {
            EXIT_VERIFY
        }
    }
}

/// Parse arguments, run, write outputs, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli).and_then(|o| write_outputs(&o).map(|_| o)) {
        Ok(o) => {
            print!("{}", summary(&o));
            o.exit_code()
        }
        Err(e) => {
            eprintln!("esw: {e}");
            e.code
        }
    }
}

fn write_outputs(o: &Outcome) -> Result<(), CliError> {
    let write = |path: &Path, text: &str| {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    };
    write(&o.report_path, &o.report.to_json())?;
    if let Some(t) = &o.table {
        write(&o.table_path, t)?;
    }
    Ok(())
}

fn summary(o: &Outcome) -> String {
    let mut s = String::new();
    for v in &o.report.verdicts {
        let _ = writeln!(s, "{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let _ = writeln!(s, "report: {}", o.report_path.display());
    if o.table.is_some() {
        let _ = writeln!(s, "table: {}", o.table_path.display());
    }
    s
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Solve { .. } => "solve",
        Command::Verify { .. } => "verify",
        Command::Simulate { .. } => "simulate",
        Command::Sweep { .. } => "sweep",
    }
}

fn scenario_path(c: &Command) -> &Path {
    match c {
        Command::Solve { scenario }
        | Command::Verify { scenario }
        | Command::Simulate { scenario, .. }
        | Command::Sweep { scenario, .. } => scenario,
    }
}

fn output_paths(cli: &Cli) -> (PathBuf, PathBuf) {
    let report = cli.common.out.clone().unwrap_or_else(|| {
        let dir = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        let stem = scenario_path(&cli.command).file_stem().map(|s| s.to_string_lossy().into_owned());
        dir.join(format!("{}.{}.json", stem.unwrap_or_else(|| "scenario".into()), command_name(&cli.command)))
    });
    let table = report.with_extension("tsv");
    (report, table)
}

/// Run a parsed command without touching the filesystem beyond reading the
/// scenario.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let scenario = Scenario::load(scenario_path(&cli.command)).map_err(|e| CliError::input(e.to_string()))?;
    let seed = cli.common.seed.unwrap_or(scenario.simulation.seed);
    let strategy = match cli.common.strategy {
        StrategyArg::Exhaustive => SearchStrategy::Exhaustive,
        StrategyArg::LocalSearch => SearchStrategy::LocalSearch { restarts: 8, seed },
    };
    let strategy_name = match cli.common.strategy {
        StrategyArg::Exhaustive => "exhaustive",
        StrategyArg::LocalSearch => "local-search",
    };
    let mut report = Report::new(command_name(&cli.command), scenario.digest(), strategy_name.into());
    let mut table = None;
    match &cli.command {
        Command::Solve { .. } => {
            solve(&scenario, strategy, &cli.common, &mut report)?;
        }
        Command::Verify { .. } => {
            let contract = solve(&scenario, strategy, &cli.common, &mut report)?
                .ok_or_else(|| CliError::input(MechanismError::RidgeUnsupported.to_string()))?;
            verify(&contract, &mut report)?;
        }
        Command::Simulate { profile, n, .. } => {
            let contract = solve(&scenario, strategy, &cli.common, &mut report)?
                .ok_or_else(|| CliError::input(MechanismError::RidgeUnsupported.to_string()))?;
            let episodes = n.unwrap_or(scenario.simulation.episodes);
            table = Some(simulate(&scenario, &contract, *profile, episodes, seed, &mut report)?);
        }
        Command::Sweep { param, range, .. } => {
            table = Some(sweep(&scenario, strategy, *param, *range, &mut report)?);
        }
    }
    let (report_path, table_path) = output_paths(cli);
    Ok(Outcome { report, table, report_path, table_path })
}

/// Plan and (for ordinary least squares) its contract, recorded in the
/// report. Tampering is applied here so every command sees the same contract.
fn solve(
    scenario: &Scenario,
    strategy: SearchStrategy,
    common: &Common,
    report: &mut Report,
) -> Result<Option<Contract>, CliError> {
    let problem = &scenario.problem;
    let plan = optimizer::solve(problem, strategy)?;
    let check = optimizer::objective_value(&plan, problem)?;
    report.push(Verdict::new(
        "plan-objective-consistent",
        (check.total - plan.objective).abs() <= optimizer::OBJECTIVE_TOLERANCE * (1.0 + plan.objective.abs()),
        format!("objective {} recomputed as {}", plan.objective, check.total),
    ));
    let contract = if problem.estimator.is_ordinary() {
        let mut c = optimizer::synthesize(problem, &plan)?;
        if let Some(f) = common.tamper_slope {
            c = c.with_scaled_slopes(f);
        }
        if let Some(d) = common.tamper_intercept {
            c = c.with_shifted_intercepts(d);
        }
        report.contract = Some(ContractRow::rows(&c));
        Some(c)
    } else {
        None
    };
    report.plan = Some(plan);
    Ok(contract)
}

fn verify(contract: &Contract, report: &mut Report) -> Result<(), CliError> {
    let u = verify_contract(contract)?;
    let describe = |pick: &dyn Fn(&crate::mechanism::WorkerVerdict) -> bool| {
        let bad: Vec<&str> = u.workers.iter().filter(|w| !pick(w)).map(|w| w.worker.as_str()).collect();
        if bad.is_empty() {
            "all workers".to_string()
        } else {
            format!("fails for {}", bad.join(", "))
        }
    };
    let dse_detail = if u.dominant_strategy {
        "best responses equal the targets against min, target and max opponents".to_string()
    } else {
        let mut d = describe(&|w| w.unique_dominant);
        for w in u.workers.iter().filter(|w| !w.unique_dominant) {
            let _ = write!(d, "; {} targets {} but best-responds {:?}", w.worker, w.target_effort, w.best_responses);
        }
        d
    };
    report.push(Verdict::new("dominant-strategy", u.dominant_strategy, dse_detail));
    report.push(Verdict::new("individually-rational", u.individually_rational, describe(&|w| w.individually_rational)));
    let tight_detail = {
        let mut d = describe(&|w| w.ir_tight);
        for w in u.workers.iter().filter(|w| !w.ir_tight) {
            let _ = write!(d, "; {} expects utility {}", w.worker, w.utility_at_target);
        }
        d
    };
    report.push(Verdict::new("zero-surplus", u.ir_tight, tight_detail));
    report.utility = Some(u);
    Ok(())
}

fn simulate(
    scenario: &Scenario,
    contract: &Contract,
    profile_arg: ProfileArg,
    episodes: u64,
    seed: u64,
    report: &mut Report,
) -> Result<String, CliError> {
    let env = scenario.environment().ok_or_else(|| CliError::input("simulate needs a [ground_truth] block"))?;
    let profile = profile_arg.profile(contract);
    let estimate = estimate_objective(contract, &env, &profile, episodes, seed)?;
    let plan_value: f64 = {
        let plan = report.plan.as_ref().expect("solved before simulating");
        plan_value(plan, contract)
    };

    let analytic = match profile_arg.efforts(contract) {
        Some(efforts) => Some(
            (0..contract.len())
                .map(|i| contract.analytic_utility(i, efforts[i], &efforts))
                .collect::<Result<Vec<f64>, _>>()?,
        ),
        None => None,
    };

    if let Some(a) = &analytic {
        let ok = estimate.worker_utilities.iter().zip(a).all(|(e, &v)| e.within(v, N_SE));
        report.push(Verdict::new(
            "utility-matches-analytic",
            ok,
            format!("empirical utilities within {N_SE} SE of closed form {a:?}"),
        ));
        let efforts = profile_arg.efforts(contract).expect("deterministic profile");
        let mut unprofitable = true;
        for (i, t) in contract.terms.iter().enumerate() {
            let at_target = contract.analytic_utility(i, t.target_effort, &efforts)?;
            unprofitable &= a[i] <= at_target + 1e-9 * (1.0 + at_target.abs());
        }
        report.push(Verdict::new(
            "deviation-unprofitable",
            unprofitable,
            "no worker gains by its profile effort over its target, given the others",
        ));
    }
    if profile_arg == ProfileArg::Target {
        let ok = estimate.worker_utilities.iter().all(|e| e.within(0.0, N_SE));
        report.push(Verdict::new("zero-surplus-empirical", ok, format!("mean utilities within {N_SE} SE of 0")));
        report.push(Verdict::new(
            "objective-matches-plan",
            estimate.total.within(plan_value, N_SE),
            format!("empirical {} ± {} vs plan value {plan_value}", estimate.total.mean, estimate.total.std_error),
        ));
    }
    let individually_rational = analytic.as_ref().is_some_and(|a| a.iter().all(|&u| u >= -1e-9));
    if individually_rational {
        report.push(Verdict::new(
            "lower-bound",
            estimate.total.mean >= plan_value - N_SE * estimate.total.std_error,
            format!("empirical objective {} vs optimum {plan_value}", estimate.total.mean),
        ));
    }

    // Best-response curves of each worker against the profile's opponents.
    let curves = (0..contract.len())
        .map(|i| {
            let grid = effort_grid(&contract.terms[i].worker.curve, TABLE_GRID);
            empirical_best_response(contract, &env, i, &profile, &grid, episodes, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut argmax_ok = true;
    let mut detail = Vec::new();
    for (c, t) in curves.iter().zip(&contract.terms) {
        let nearest = nearest_index(&c.grid, t.target_effort);
        let ok = c.argmax == nearest || (c.argmax.abs_diff(nearest) == 1 && !c.confident);
        argmax_ok &= ok;
        detail.push(format!("{}: argmax {} nearest-target {}", t.worker.id, c.grid[c.argmax], c.grid[nearest]));
    }
    report.push(Verdict::new("empirical-best-response", argmax_ok, detail.join("; ")));

    let mut table = String::from("index");
    for t in &contract.terms {
        let id = &t.worker.id;
        let _ = write!(table, "\t{id}_effort\t{id}_utility\t{id}_se");
    }
    table.push('\n');
    for j in 0..TABLE_GRID {
        let _ = write!(table, "{j}");
        for c in &curves {
            let _ = write!(table, "\t{}\t{}\t{}", c.grid[j], c.utility[j].mean, c.utility[j].std_error);
        }
        table.push('\n');
    }

    report.simulation = Some(SimulationSummary {
        profile: profile_arg.to_string(),
        noise: env.noise.name().into(),
        plan_value,
        estimate,
        analytic_utilities: analytic,
        best_response: curves,
    });
    Ok(table)
}

/// Lower-bound objective value `MSE + Σ η_i e_i` at the plan's targets, with
/// the contract's payment weights.
pub fn plan_value(plan: &Plan, contract: &Contract) -> f64 {
    plan.mse + contract.terms.iter().map(|t| t.eta * t.target_effort).sum::<f64>()
}

fn nearest_index(grid: &[f64], x: f64) -> usize {
    (1..grid.len()).fold(0, |best, j| if (grid[j] - x).abs() < (grid[best] - x).abs() { j } else { best })
}

fn sweep(
    scenario: &Scenario,
    strategy: SearchStrategy,
    param: SweepParam,
    range: RangeArg,
    report: &mut Report,
) -> Result<String, CliError> {
    let base = &scenario.problem;
    let values = range.values();
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| {
            let mut problem = base.clone();
            problem.objective = match param {
                SweepParam::Eta => Objective::Weighted(EtaWeights::Uniform(v)),
                SweepParam::Budget => Objective::Budget {
                    budget: v,
                    calibration_eta: match &base.objective {
                        Objective::Budget { calibration_eta, .. } => *calibration_eta,
                        _ => None,
                    },
                },
            };
            let plan = optimizer::solve(&problem, strategy)?;
            Ok(SweepRow { parameter: v, objective: plan.objective, total_effort: plan.total_effort(), mse: plan.mse })
        })
        .collect::<Result<_, OptimizeError>>()?;

    let tol = |x: f64| 1e-9 * (1.0 + x.abs());
    match param {
        SweepParam::Eta => {
            let ok = rows.windows(2).all(|w| w[1].total_effort <= w[0].total_effort + tol(w[0].total_effort));
            report.push(Verdict::new("effort-nonincreasing-in-eta", ok, "total effort across increasing eta"));
        }
        SweepParam::Budget => {
            let ok = rows.windows(2).all(|w| w[1].mse <= w[0].mse + tol(w[0].mse));
            report.push(Verdict::new("mse-nonincreasing-in-budget", ok, "MSE across increasing budget"));
            let within = rows.iter().all(|r| r.total_effort <= r.parameter + tol(r.parameter));
            report.push(Verdict::new("budget-respected", within, "total effort at most the budget"));
        }
    }
    let name = match param {
        SweepParam::Eta => "eta",
        SweepParam::Budget => "budget",
    };
    let mut table = format!("{name}\tobjective\ttotal_effort\tmse\n");
    for r in &rows {
        let _ = writeln!(table, "{}\t{}\t{}\t{}", r.parameter, r.objective, r.total_effort, r.mse);
    }
    report.sweep = Some(rows);
    Ok(table)
}
