//! JSON scenario files: validation, execution and artifacts.
//!
//! A scenario is validated completely before any computation. Running it
//! writes the requested artifacts to `<out_dir>/<name>/`; identical inputs
//! give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certify;
use crate::error::{Error, Result};
use crate::fixset::{distance_to_fix, DykstraOverrides, FixSetOracle, OracleSpec};
use crate::flow::{integrate_flow, km_iterate, IntegratorConfig, Mode, Trajectory};
use crate::ode::AdaptiveStats;
use crate::operators::{Operator, OperatorSpec};
use crate::point::Point;
use crate::rates::{
    check_hoelder_rate_bound, check_linear_rate_bound, fit_decay, select_model, BoundCheck,
    FitOutcome, Metric, Model, ModelSelection, RateFit,
};
use crate::regularity::{
    check_avg_inequality, check_descent, estimate_operator_regularity, InequalityReport,
    RegularityEstimate, RegularityMode,
};
use crate::sampling::Region;
use crate::schedule::{LambdaSchedule, ScheduleSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    /// Which result of the theory the scenario exercises.
    #[serde(default)]
    pub exercises: String,
    pub dimension: usize,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub fix_oracle: Option<OracleSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Required in continuous mode.
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    /// Required in discrete mode.
    #[serde(default)]
    pub iterations: Option<usize>,
    pub x0: InitialPoint,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
}

fn default_mode() -> Mode {
    Mode::Continuous
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialPoint {
    Explicit(Vec<f64>),
    Random { random: RandomPoint },
}

/// A point drawn uniformly from `B(0, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPoint {
    pub seed: u64,
    pub radius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub regularity: Option<RegularityConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
    /// Residual below which the final sample is taken as the limit.
    #[serde(default)]
    pub limit_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConfig {
    pub mode: RegularityMode,
    pub samples: usize,
    pub seed: u64,
    /// Defaults to the Fejer ball `B(P_Fix x0, d(x0, Fix T))`, which
    /// contains the whole trajectory.
    #[serde(default)]
    pub region: Option<Region>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Exponential,
    Powerlaw,
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub metric: Metric,
    pub model: ModelChoice,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    /// Fails the run unless model selection picks this model.
    #[serde(default)]
    pub expect_model: Option<Model>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckConfig {
    AvgInequality {
        #[serde(default)]
        tol: Option<f64>,
    },
    Descent {
        #[serde(default)]
        tol: Option<f64>,
    },
    LinearRateBound {
        #[serde(default)]
        tol: Option<f64>,
    },
    HoelderRateBound {
        #[serde(default)]
        tol: Option<f64>,
    },
    /// Sampled certificates for the operator's declared properties.
    Certificates {
        #[serde(default)]
        pairs: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

pub const DEFAULT_AVG_TOL: f64 = 1e-9;
pub const DEFAULT_LINEAR_BOUND_TOL: f64 = 1e-9;
pub const DEFAULT_HOELDER_BOUND_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    TrajectoryCsv,
    RatefitJson,
    RegularityJson,
    ReportJson,
}

impl OutputKind {
    pub fn file_name(self) -> &'static str {
        match self {
            OutputKind::TrajectoryCsv => "trajectory.csv",
            OutputKind::RatefitJson => "ratefit.json",
            OutputKind::RegularityJson => "regularity.json",
            OutputKind::ReportJson => "report.json",
        }
    }
}

/// Settings that come from the command line rather than the file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub dykstra: DykstraOverrides,
}

/// A validated scenario, ready to run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub operator: Operator,
    pub oracle: Option<FixSetOracle>,
    pub schedule: LambdaSchedule,
    pub x0: Point,
}

fn cfg_err(path: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let path = path.into();
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds every object the run needs, reporting the first invalid field
    /// by its dotted path.
    pub fn prepare(&self, opts: &RunOptions) -> Result<Prepared> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::config(
                "name",
                "must be nonempty and use only letters, digits, '_' and '-'",
            ));
        }
        if self.dimension == 0 {
            return Err(Error::config("dimension", "must be positive"));
        }
        let operator = self.operator.build_at("operator")?;
        if operator.dim() != self.dimension {
            return Err(Error::config(
                "operator",
                format!(
                    "operator acts on dimension {}, scenario declares {}",
                    operator.dim(),
                    self.dimension
                ),
            ));
        }
        let oracle = match &self.fix_oracle {
            Some(spec) => Some(spec.build_at("fix_oracle", Some(opts.dykstra))?),
            None => operator.fix_oracle().cloned(),
        };
        if let Some(o) = &oracle {
            if o.dim() != self.dimension {
                return Err(Error::config("fix_oracle", "dimension does not match the scenario"));
            }
        }
        let schedule = LambdaSchedule::try_from(self.schedule.clone()).map_err(cfg_err("schedule"))?;
        match self.mode {
            Mode::Continuous => {
                let integ = self
                    .integrator
                    .as_ref()
                    .ok_or_else(|| Error::config("integrator", "required in continuous mode"))?;
                integ.validate().map_err(cfg_err("integrator"))?;
                if integ.method == crate::flow::Method::EulerUnit && !schedule.is_unit_piecewise() {
                    return Err(Error::config(
                        "integrator.method",
                        "unit-step Euler needs a schedule constant on each [k, k+1)",
                    ));
                }
                if self.iterations.is_some() {
                    return Err(Error::config("iterations", "only used in discrete mode"));
                }
            }
            Mode::Discrete => {
                match self.iterations {
                    Some(k) if k > 0 => {}
                    _ => return Err(Error::config("iterations", "must be a positive integer")),
                }
                if self.integrator.is_some() {
                    return Err(Error::config("integrator", "only used in continuous mode"));
                }
            }
        }
        let x0 = match &self.x0 {
            InitialPoint::Explicit(v) => {
                let p = Point::new(v.clone()).map_err(cfg_err("x0"))?;
                if p.dim() != self.dimension {
                    return Err(Error::config(
                        "x0",
                        format!("has dimension {}, expected {}", p.dim(), self.dimension),
                    ));
                }
                p
            }
            InitialPoint::Random { random } => {
                let region = Region::origin_ball(self.dimension, random.radius)
                    .map_err(cfg_err("x0.random.radius"))?;
                region.sample(1, random.seed).remove(0)
            }
        };
        self.validate_analysis(oracle.is_some())?;
        Ok(Prepared {
            config: self.clone(),
            operator,
            oracle,
            schedule,
            x0,
        })
    }

    fn validate_analysis(&self, has_oracle: bool) -> Result<()> {
        let a = &self.analysis;
        if let Some(tol) = a.limit_tol {
            if !(tol > 0.0) {
                return Err(Error::config("analysis.limit_tol", "must be positive"));
            }
        }
        if let Some(r) = &a.regularity {
            if r.samples < crate::regularity::MIN_SAMPLES {
                return Err(Error::config(
                    "analysis.regularity.samples",
                    format!("need at least {}", crate::regularity::MIN_SAMPLES),
                ));
            }
            match &r.region {
                Some(region) => {
                    if region.center.dim() != self.dimension || !(region.radius > 0.0) {
                        return Err(Error::config(
                            "analysis.regularity.region",
                            "needs a positive radius and a centre of the scenario's dimension",
                        ));
                    }
                }
                None => {}
            }
            if !has_oracle {
                return Err(Error::config("analysis.regularity", "needs a fix_oracle"));
            }
        }
        if let Some(f) = &a.fit {
            if f.metric == Metric::DistFix && !has_oracle {
                return Err(Error::config("analysis.fit.metric", "dist_fix needs a fix_oracle"));
            }
            if let Some([lo, hi]) = f.window {
                if !(lo < hi) {
                    return Err(Error::config("analysis.fit.window", "must satisfy t_min < t_max"));
                }
            }
            if f.expect_model.is_some() && f.model != ModelChoice::Auto {
                return Err(Error::config(
                    "analysis.fit.expect_model",
                    "only meaningful with model \"auto\"",
                ));
            }
        }
        for (i, c) in a.checks.iter().enumerate() {
            let path = format!("analysis.checks[{i}]");
            let needs_oracle = !matches!(c, CheckConfig::Certificates { .. });
            if needs_oracle && !has_oracle {
                return Err(Error::config(path, "needs a fix_oracle"));
            }
            match c {
                CheckConfig::Descent { .. } => {
                    if self.mode != Mode::Continuous {
                        return Err(Error::config(path, "descent is checked on continuous runs"));
                    }
                    if let Some(integ) = &self.integrator {
                        let dense = match &integ.sampling {
                            crate::flow::Sampling::Interval(dt) => {
                                *dt <= crate::regularity::MAX_DESCENT_DT
                            }
                            crate::flow::Sampling::Stride(n) => match integ.method {
                                crate::flow::Method::EulerFixed { h }
                                | crate::flow::Method::Rk4Fixed { h } => {
                                    h * *n as f64 <= crate::regularity::MAX_DESCENT_DT
                                }
                                _ => false,
                            },
                            _ => false,
                        };
                        if !dense {
                            return Err(Error::config(
                                format!("{path}.kind"),
                                format!(
                                    "descent needs samples at most {} apart; use a denser sampling interval",
                                    crate::regularity::MAX_DESCENT_DT
                                ),
                            ));
                        }
                    }
                }
                CheckConfig::LinearRateBound { .. } | CheckConfig::HoelderRateBound { .. } => {
                    let want = if matches!(c, CheckConfig::LinearRateBound { .. }) {
                        RegularityMode::Linear
                    } else {
                        RegularityMode::Hoelder
                    };
                    if a.regularity.as_ref().map(|r| r.mode) != Some(want) {
                        return Err(Error::config(
                            path,
                            format!("needs analysis.regularity in {want:?} mode").to_lowercase(),
                        ));
                    }
                    if self.mode != Mode::Continuous {
                        return Err(Error::config(path, "rate bounds are checked on continuous runs"));
                    }
                    if let Some(tol) = check_tol(c) {
                        if !(tol >= 0.0) {
                            return Err(Error::config(format!("{path}.tol"), "must be nonnegative"));
                        }
                    }
                }
                CheckConfig::AvgInequality { tol } => {
                    if let Some(tol) = tol {
                        if !(*tol >= 0.0) {
                            return Err(Error::config(format!("{path}.tol"), "must be nonnegative"));
                        }
                    }
                }
                CheckConfig::Certificates { pairs, .. } => {
                    if *pairs == Some(0) {
                        return Err(Error::config(format!("{path}.pairs"), "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_tol(c: &CheckConfig) -> Option<f64> {
    match c {
        CheckConfig::AvgInequality { tol }
        | CheckConfig::Descent { tol }
        | CheckConfig::LinearRateBound { tol }
        | CheckConfig::HoelderRateBound { tol } => *tol,
        CheckConfig::Certificates { .. } => None,
    }
}

/// One line of a scenario verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl From<InequalityReport> for CheckResult {
    fn from(r: InequalityReport) -> Self {
        let detail = (r.excluded > 0).then(|| format!("{} samples skipped", r.excluded));
        Self {
            name: r.name,
            passed: r.passed,
            worst_margin: r.worst_slack,
            tolerance: r.tolerance,
            n_points: r.n_points,
            detail,
        }
    }
}

impl From<BoundCheck> for CheckResult {
    fn from(b: BoundCheck) -> Self {
        Self {
            name: b.bound_name,
            passed: b.passed,
            worst_margin: b.worst_margin,
            tolerance: b.tolerance,
            n_points: b.n_points,
            detail: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitSummary {
    Selection(ModelSelection),
    Single(RateFit),
    Converged { converged: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    CheckFailed,
    NumericError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub t: f64,
    pub x: Point,
    pub residual: f64,
    pub dist_fix: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: u32,
    pub name: String,
    pub exercises: String,
    pub mode: Mode,
    pub status: RunStatus,
    pub n_samples: usize,
    pub final_state: Option<FinalState>,
    pub limit_estimate: Option<Point>,
    pub d0: Option<f64>,
    pub integrator_stats: Option<AdaptiveStats>,
    pub regularity: Option<RegularityEstimate>,
    pub fit: Option<FitSummary>,
    pub checks: Vec<CheckResult>,
    pub error: Option<String>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.status == RunStatus::Passed
    }
}

/// Everything a run produced, in memory.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub trajectory: Option<Trajectory>,
    pub written: Vec<PathBuf>,
}

impl Prepared {
    /// Fejer ball `B(P_Fix x0, d(x0, Fix T))`.
    pub fn fejer_region(&self) -> Result<Region> {
        let oracle = self
            .oracle
            .as_ref()
            .ok_or_else(|| Error::usage("the default region needs a fix oracle"))?;
        let r = distance_to_fix(oracle, &self.x0)?;
        if !(r.distance > 0.0) {
            return Err(Error::config(
                "analysis.regularity.region",
                "x0 is already a fixed point; give an explicit region",
            ));
        }
        Region::new(r.witness, r.distance)
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        let mut traj = match self.config.mode {
            Mode::Continuous => integrate_flow(
                &self.operator,
                &self.x0,
                &self.schedule,
                self.config.integrator.as_ref().expect("validated"),
                self.oracle.as_ref(),
            )?,
            Mode::Discrete => km_iterate(
                &self.operator,
                &self.x0,
                &self.schedule,
                self.config.iterations.expect("validated"),
                self.oracle.as_ref(),
            )?,
        };
        if let Some(tol) = self.config.analysis.limit_tol {
            traj.set_limit_tolerance(tol);
        }
        Ok(traj)
    }

    pub fn regularity(&self) -> Result<Option<RegularityEstimate>> {
        let Some(cfg) = &self.config.analysis.regularity else {
            return Ok(None);
        };
        let region = match &cfg.region {
            Some(r) => r.clone(),
            None => self.fejer_region()?,
        };
        let oracle = self.oracle.as_ref().expect("validated");
        estimate_operator_regularity(&self.operator, oracle, &region, cfg.samples, cfg.mode, cfg.seed)
            .map(Some)
    }

    /// Runs the scenario without touching the file system.
    pub fn execute(&self) -> ScenarioRun {
        let cfg = &self.config;
        let mut report = ScenarioReport {
            schema: SCHEMA_VERSION,
            name: cfg.name.clone(),
            exercises: cfg.exercises.clone(),
            mode: cfg.mode,
            status: RunStatus::Passed,
            n_samples: 0,
            final_state: None,
            limit_estimate: None,
            d0: None,
            integrator_stats: None,
            regularity: None,
            fit: None,
            checks: Vec::new(),
            error: None,
        };
        let traj = match self.trajectory() {
            Ok(t) => t,
            Err(Error::Integration { t, message, partial }) => {
                report.status = RunStatus::NumericError;
                report.error = Some(format!("integration failed at t = {t}: {message}"));
                fill_trajectory_fields(&mut report, &partial);
                return ScenarioRun {
                    report,
                    trajectory: Some(*partial),
                    written: Vec::new(),
                };
            }
            Err(e) => return failed(report, None, e),
        };
        fill_trajectory_fields(&mut report, &traj);
        if let Some(o) = &self.oracle {
            match distance_to_fix(o, &self.x0) {
                Ok(r) => report.d0 = Some(r.distance),
                Err(e) => return failed(report, Some(traj), e),
            }
        }
        match self.analyse(&traj, &mut report) {
            Ok(()) => {
                if report.checks.iter().any(|c| !c.passed) {
                    report.status = RunStatus::CheckFailed;
                }
                ScenarioRun {
                    report,
                    trajectory: Some(traj),
                    written: Vec::new(),
                }
            }
            Err(e) => failed(report, Some(traj), e),
        }
    }

    fn analyse(&self, traj: &Trajectory, report: &mut ScenarioReport) -> Result<()> {
        let analysis = &self.config.analysis;
        report.regularity = self.regularity()?;
        if let Some(fit) = &analysis.fit {
            match fit.model {
                ModelChoice::Auto => {
                    let sel = select_model(traj, fit.metric, fit.window)?;
                    if let Some(expected) = fit.expect_model {
                        let margin = sel.powerlaw.rss_per_point() - sel.exponential.rss_per_point();
                        let margin = if expected == Model::Exponential { margin } else { -margin };
                        report.checks.push(CheckResult {
                            name: format!("model selection picks {}", model_name(expected)),
                            passed: sel.chosen == expected,
                            worst_margin: margin,
                            tolerance: 0.0,
                            n_points: sel.exponential.n_points + sel.powerlaw.n_points,
                            detail: Some(format!("chosen {}", model_name(sel.chosen))),
                        });
                    }
                    report.fit = Some(FitSummary::Selection(sel));
                }
                ModelChoice::Exponential | ModelChoice::Powerlaw => {
                    let model = if fit.model == ModelChoice::Exponential {
                        Model::Exponential
                    } else {
                        Model::Powerlaw
                    };
                    report.fit = Some(match fit_decay(traj, fit.metric, model, fit.window)? {
                        FitOutcome::Fitted(f) => FitSummary::Single(f),
                        FitOutcome::Converged => FitSummary::Converged { converged: true },
                    });
                }
            }
        }
        let x_star = self.reference_fixed_point(traj)?;
        for check in &analysis.checks {
            match check {
                CheckConfig::AvgInequality { tol } => {
                    let r = check_avg_inequality(
                        traj,
                        &self.operator,
                        x_star.as_ref().expect("validated"),
                        &self.schedule,
                        tol.unwrap_or(DEFAULT_AVG_TOL),
                    )?;
                    report.checks.push(r.into());
                }
                CheckConfig::Descent { tol } => {
                    let rs = check_descent(
                        traj,
                        &self.operator,
                        self.oracle.as_ref().expect("validated"),
                        x_star.as_ref().expect("validated"),
                        &self.schedule,
                        *tol,
                    )?;
                    report.checks.extend(rs.into_iter().map(CheckResult::from));
                }
                CheckConfig::LinearRateBound { tol } => {
                    let est = report.regularity.as_ref().expect("validated");
                    let bs = check_linear_rate_bound(
                        traj,
                        est.kappa,
                        &self.schedule,
                        report.d0.expect("oracle present"),
                        tol.unwrap_or(DEFAULT_LINEAR_BOUND_TOL),
                    )?;
                    report.checks.extend(bs.into_iter().map(CheckResult::from));
                }
                CheckConfig::HoelderRateBound { tol } => {
                    let est = report.regularity.as_ref().expect("validated");
                    let bs = check_hoelder_rate_bound(
                        traj,
                        est.kappa,
                        est.gamma,
                        &self.schedule,
                        tol.unwrap_or(DEFAULT_HOELDER_BOUND_TOL),
                    )?;
                    report.checks.extend(bs.into_iter().map(CheckResult::from));
                }
                CheckConfig::Certificates { pairs, seed } => {
                    let region = Region::origin_ball(self.operator.dim(), certify::DEFAULT_RADIUS)?;
                    let rs = certify::certify_meta(
                        &self.operator,
                        &region,
                        pairs.unwrap_or(certify::DEFAULT_PAIRS),
                        seed.unwrap_or(0),
                    )?;
                    report.checks.extend(rs.into_iter().map(CheckResult::from));
                }
            }
        }
        Ok(())
    }

    /// The fixed point nearest to `x0`, used as `x*` by the pointwise checks.
    fn reference_fixed_point(&self, traj: &Trajectory) -> Result<Option<Point>> {
        if let Some(o) = &self.oracle {
            return Ok(Some(distance_to_fix(o, &self.x0)?.witness));
        }
        Ok(traj.limit_estimate.clone())
    }

    /// Executes and writes the requested artifacts.
    pub fn run(&self, out_dir: &Path) -> Result<ScenarioRun> {
        let mut run = self.execute();
        let dir = out_dir.join(&self.config.name);
        fs::create_dir_all(&dir)?;
        for kind in &self.config.outputs {
            let path = dir.join(kind.file_name());
            let contents = match kind {
                OutputKind::TrajectoryCsv => match &run.trajectory {
                    Some(t) => t.to_csv_string(),
                    None => continue,
                },
                OutputKind::RatefitJson => match &run.report.fit {
                    Some(f) => to_json(f)?,
                    None => continue,
                },
                OutputKind::RegularityJson => match &run.report.regularity {
                    Some(r) => to_json(r)?,
                    None => continue,
                },
                OutputKind::ReportJson => to_json(&run.report)?,
            };
            fs::write(&path, contents)?;
            run.written.push(path);
        }
        Ok(run)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn model_name(m: Model) -> &'static str {
    match m {
        Model::Exponential => "exponential",
        Model::Powerlaw => "powerlaw",
    }
}

fn fill_trajectory_fields(report: &mut ScenarioReport, traj: &Trajectory) {
    report.n_samples = traj.samples.len();
    report.limit_estimate = traj.limit_estimate.clone();
    report.integrator_stats = traj.stats.clone();
    report.final_state = traj.samples.last().map(|s| FinalState {
        t: s.t,
        x: s.x.clone(),
        residual: s.residual,
        dist_fix: s.dist_fix,
    });
}

fn failed(mut report: ScenarioReport, trajectory: Option<Trajectory>, e: Error) -> ScenarioRun {
    report.status = if e.is_numeric() {
        RunStatus::NumericError
    } else {
        RunStatus::CheckFailed
    };
    report.error = Some(e.to_string());
    ScenarioRun {
        report,
        trajectory,
        written: Vec::new(),
    }
}

/// Scenarios shipped with the library, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("two_lines_60deg", include_str!("../scenarios/two_lines_60deg.json")),
    ("two_lines_60deg_km", include_str!("../scenarios/two_lines_60deg_km.json")),
    ("tangent_ball_line", include_str!("../scenarios/tangent_ball_line.json")),
    ("tangent_ball_line_km", include_str!("../scenarios/tangent_ball_line_km.json")),
    ("box_qp_forward_backward", include_str!("../scenarios/box_qp_forward_backward.json")),
    ("box_qp_forward_backward_km", include_str!("../scenarios/box_qp_forward_backward_km.json")),
    ("dr_two_halfspaces", include_str!("../scenarios/dr_two_halfspaces.json")),
    ("dr_two_halfspaces_km", include_str!("../scenarios/dr_two_halfspaces_km.json")),
    ("cyclic_three_boxes", include_str!("../scenarios/cyclic_three_boxes.json")),
    ("cyclic_three_boxes_km", include_str!("../scenarios/cyclic_three_boxes_km.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::from_json(text).expect("bundled scenarios parse"))
}

/// Loads a scenario from a path, or by bundled name when no such file exists.
pub fn load(path_or_name: &str) -> Result<ScenarioConfig> {
    let path = Path::new(path_or_name);
    if path.exists() {
        return ScenarioConfig::from_path(path);
    }
    bundled(path_or_name).ok_or_else(|| {
        Error::config(
            "<file>",
            format!("{path_or_name}: no such file or bundled scenario"),
        )
    })
}

/// Exit status for a finished or failed run: 0 pass, 1 check failure,
/// 2 invalid configuration, 3 numeric failure.
pub fn exit_code(result: &Result<ScenarioRun>) -> i32 {
    match result {
        Ok(run) => match run.report.status {
            RunStatus::Passed => 0,
            RunStatus::CheckFailed => 1,
            RunStatus::NumericError => 3,
        },
        Err(e) => error_exit_code(e),
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_validate() {
        for name in bundled_names() {
            let cfg = bundled(name).unwrap();
            assert_eq!(cfg.name, name);
            cfg.prepare(&RunOptions::default())
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn bad_weights_name_their_path() {
        let text = r#"{
            "schema": 1, "name": "bad", "dimension": 2,
            "operator": {"kind": "convex_combination",
                "children": [{"kind": "identity", "dim": 2}, {"kind": "zero", "dim": 2}],
                "weights": [0.5, 0.4]},
            "schedule": {"kind": "constant", "value": 1.0},
            "mode": "discrete", "iterations": 3, "x0": [1.0, 2.0]
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        match cfg.prepare(&RunOptions::default()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "operator.children.weights"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mode_specific_fields_are_enforced() {
        let text = r#"{
            "schema": 1, "name": "m", "dimension": 1,
            "operator": {"kind": "zero", "dim": 1},
            "schedule": {"kind": "constant", "value": 1.0},
            "mode": "discrete", "x0": [1.0]
        }"#;
        let err = ScenarioConfig::from_json(text)
            .unwrap()
            .prepare(&RunOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "iterations"), "{err}");
    }

    #[test]
    fn random_initial_point_is_seeded() {
        let text = r#"{
            "schema": 1, "name": "r", "dimension": 3,
            "operator": {"kind": "zero", "dim": 3},
            "schedule": {"kind": "constant", "value": 0.5},
            "mode": "discrete", "iterations": 4,
            "x0": {"random": {"seed": 5, "radius": 2.0}}
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        let a = cfg.prepare(&RunOptions::default()).unwrap().x0;
        let b = cfg.prepare(&RunOptions::default()).unwrap().x0;
        assert_eq!(a, b);
        assert!(a.norm() <= 2.0);
    }
}
