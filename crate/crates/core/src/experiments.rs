//! Named, config-driven experiment suites.
//!
//! Each suite evaluates one family of inequalities and returns an
//! [`ExperimentReport`]: statistic rows per sweep point, inequality rows
//! judged by the [`Comparison`] policy, and plot-data tables. Sweep points
//! run in parallel and results are collected in sweep order, so reports are
//! byte-identical across thread counts.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::{concavity_check, extract_boundary, solve_dp, DpError, DpParams, DpSettings};
use crate::filter::{filter_exact, filter_sde, shiryaev_filter, posterior_mean_check, FilterError};
use crate::model::{constant_model, validate, ModelSpec, RawDisorder, RawModel, ValidationError};
use crate::risk::{
    classical_solution, extreme_atoms, optimize_threshold, path_losses, robustness_risks,
    RiskError, StrategySpec, ThresholdOptimum,
};
use crate::shiryaev::{solve, ClassicalParams, ShiryaevError};
use crate::sim::{simulate_scenario, SimError, TimeGrid};
use crate::stats::{pairwise_sum, show, Comparison, Quantity, DISCRETIZATION_ALLOWANCE};

/// Smallest Monte Carlo budget accepted by the risk-based suites.
pub const MIN_RISK_PATHS: usize = 1_000;
/// Smallest budget of `filter_consistency`.
pub const MIN_FILTER_PATHS: usize = 10;
/// Smallest budget of `expectation_identity`.
pub const MIN_TOWER_PATHS: usize = 1_000;
/// Ratio window of the filter error under dt halving.
pub const RATIO_WINDOW: (f64, f64) = (1.2, 3.0);
/// Largest admissible positive second difference of the value function.
pub const CONCAVITY_TOLERANCE: f64 = 5e-4;
/// Agreement required between the exact filter and the Shiryaev filter.
pub const SPECIALIZATION_TOLERANCE: f64 = 1e-10;
/// Default Monte Carlo budget per sweep point.
pub const DEFAULT_PATHS: usize = 200_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("cannot read config file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("cannot parse config file {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ValidationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Shiryaev(#[from] ShiryaevError),
    #[error(transparent)]
    Dp(#[from] DpError),
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// The available suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    MonotonicitySigma,
    MonotonicityScale,
    MonotonicityCost,
    IntensityComparison,
    RobustnessSandwich,
    MagnitudeMonotonicity,
    BoundaryStrip,
    FilterConsistency,
    ExpectationIdentity,
    Concavity,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 10] = [
        Self::MonotonicitySigma,
        Self::MonotonicityScale,
        Self::MonotonicityCost,
        Self::IntensityComparison,
        Self::RobustnessSandwich,
        Self::MagnitudeMonotonicity,
        Self::BoundaryStrip,
        Self::FilterConsistency,
        Self::ExpectationIdentity,
        Self::Concavity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MonotonicitySigma => "monotonicity_sigma",
            Self::MonotonicityScale => "monotonicity_scale",
            Self::MonotonicityCost => "monotonicity_cost",
            Self::IntensityComparison => "intensity_comparison",
            Self::RobustnessSandwich => "robustness_sandwich",
            Self::MagnitudeMonotonicity => "magnitude_monotonicity",
            Self::BoundaryStrip => "boundary_strip",
            Self::FilterConsistency => "filter_consistency",
            Self::ExpectationIdentity => "expectation_identity",
            Self::Concavity => "concavity",
        }
    }

    /// Smallest accepted `paths`; zero when the suite simulates nothing.
    pub fn minimum_paths(&self) -> usize {
        match self {
            Self::BoundaryStrip | Self::Concavity => 0,
            Self::FilterConsistency => MIN_FILTER_PATHS,
            Self::ExpectationIdentity => MIN_TOWER_PATHS,
            _ => MIN_RISK_PATHS,
        }
    }
}

impl FromStr for ExperimentName {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_paths() -> usize {
    DEFAULT_PATHS
}

fn default_dt() -> f64 {
    1e-3
}

fn default_bracket() -> (f64, f64) {
    (0.01, 0.61)
}

fn default_segments() -> usize {
    200
}

/// Experiment description as read from a JSON file.
///
/// `sweep` holds multipliers of the base `σ(·)` (`monotonicity_sigma`), of
/// the magnitudes (`monotonicity_scale`) or of the base `c(·)`
/// (`monotonicity_cost`), and time steps for `filter_consistency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: RawModel,
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to eight mean disorder times, rounded up to the grid.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Threshold interval scanned by best-threshold searches.
    #[serde(default = "default_bracket")]
    pub bracket: (f64, f64),
    #[serde(default)]
    pub lambda_l: Option<f64>,
    #[serde(default)]
    pub lambda_r: Option<f64>,
    /// Simplex grid step of the value iteration.
    #[serde(default)]
    pub h: Option<f64>,
    /// Times of `expectation_identity`.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Random segments of `concavity`.
    #[serde(default = "default_segments")]
    pub segments: usize,
    /// Starting points `π̃`; defaults to the model's.
    #[serde(default)]
    pub pi_values: Vec<f64>,
    /// Disorder laws with hazard at most the base rate.
    #[serde(default)]
    pub alternatives: Vec<RawDisorder>,
    /// Time-dependent law dominating the piecewise alternatives; compared
    /// with them in reported, non-gating rows.
    #[serde(default)]
    pub dominating: Option<RawDisorder>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| ExperimentError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_json_str(&text, &display)
    }

    /// Checks the name, the sweep order and the budget.
    pub fn validate(&self) -> Result<(ExperimentName, ModelSpec)> {
        let name: ExperimentName = self.name.parse()?;
        let model = validate(&self.model)?;
        if self.sweep.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ExperimentError::Config("sweep values must be finite and positive".into()));
        }
        if self.sweep.windows(2).any(|w| w[0] > w[1]) {
            return Err(ExperimentError::Config("sweep values must be sorted ascending".into()));
        }
        if self.paths < name.minimum_paths() {
            return Err(ExperimentError::Config(format!(
                "{name} needs at least {} paths, got {}",
                name.minimum_paths(),
                self.paths
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ExperimentError::Config(format!("dt = {} must be positive", self.dt)));
        }
        if self.pi_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ExperimentError::Config("pi_values must lie in [0, 1]".into()));
        }
        Ok((name, model))
    }
}

/// One report row: a statistic, optionally checked against a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub sweep_value: Option<f64>,
    pub anchor: String,
    pub statistic: Quantity,
    /// Right-hand side of `statistic ≤ bound`, absent for plain statistics.
    pub bound: Option<Quantity>,
    pub allowance: Option<f64>,
    pub slack: Option<f64>,
    /// Combined confidence band plus allowance.
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub gating: bool,
}

impl ReportRow {
    pub fn statistic(sweep_value: Option<f64>, anchor: impl Into<String>, q: Quantity) -> Self {
        Self {
            sweep_value,
            anchor: anchor.into(),
            statistic: q,
            bound: None,
            allowance: None,
            slack: None,
            tolerance: None,
            pass: true,
            gating: false,
        }
    }

    pub fn check(sweep_value: Option<f64>, c: Comparison) -> Self {
        Self {
            sweep_value,
            anchor: c.anchor,
            statistic: c.lhs,
            bound: Some(c.rhs),
            allowance: Some(c.allowance),
            slack: Some(c.slack),
            tolerance: Some(c.tolerance),
            pass: c.pass,
            gating: c.gating,
        }
    }

    pub fn is_check(&self) -> bool {
        self.bound.is_some()
    }

    pub fn describe(&self) -> String {
        let sweep = self.sweep_value.map(|v| format!(" [{v}]")).unwrap_or_default();
        match &self.bound {
            None => format!(
                "{}{sweep}: {} = {} (se {:.2e})",
                self.anchor,
                self.statistic.label,
                show(self.statistic.value),
                self.statistic.std_error
            ),
            Some(b) => format!(
                "{}{sweep}: {} = {} <= {} = {} (slack {:+.3e}, tolerance {:.3e}){} {}",
                self.anchor,
                self.statistic.label,
                show(self.statistic.value),
                b.label,
                show(b.value),
                self.slack.unwrap_or(0.0),
                self.tolerance.unwrap_or(0.0),
                if self.gating { "" } else { " [reported]" },
                if self.pass { "PASS" } else { "FAIL" }
            ),
        }
    }
}

/// Plot data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Outcome of [`run_experiment`]. The runtime is kept out of the
/// serialized form so that reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub metadata: BTreeMap<String, f64>,
    pub rows: Vec<ReportRow>,
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    fn new(name: ExperimentName, cfg: &ExperimentConfig) -> Self {
        Self {
            name: name.to_string(),
            seed: cfg.seed,
            metadata: BTreeMap::new(),
            rows: Vec::new(),
            tables: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    fn meta(&mut self, key: &str, value: f64) {
        self.metadata.insert(key.to_string(), value);
    }

    fn check(&mut self, sweep_value: Option<f64>, c: Comparison) {
        self.rows.push(ReportRow::check(sweep_value, c));
    }

    fn stat(&mut self, sweep_value: Option<f64>, anchor: &str, q: Quantity) {
        self.rows.push(ReportRow::statistic(sweep_value, anchor, q));
    }

    /// True when every gating check passes (vacuously true without checks).
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass || !r.gating)
    }

    pub fn failures(&self) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.gating && !r.pass).collect()
    }

    pub fn checks(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.is_check())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV line per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "sweep_value,anchor,statistic,value,std_error,bound,bound_value,bound_std_error,allowance,slack,tolerance,pass,gating"
        )?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let (bl, bv, bs) = match &r.bound {
                Some(b) => (csv_field(&b.label), b.value.to_string(), b.std_error.to_string()),
                None => Default::default(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                opt(r.sweep_value),
                csv_field(&r.anchor),
                csv_field(&r.statistic.label),
                r.statistic.value,
                r.statistic.std_error,
                bl,
                bv,
                bs,
                opt(r.allowance),
                opt(r.slack),
                opt(r.tolerance),
                r.pass,
                r.gating
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Validates `config` and runs the named suite.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (name, model) = config.validate()?;
    let start = Instant::now();
    let mut report = ExperimentReport::new(name, config);
    report.meta("paths", config.paths as f64);
    report.meta("dt", config.dt);
    match name {
        ExperimentName::MonotonicitySigma => monotonicity(config, &model, Sweep::Sigma, &mut report)?,
        ExperimentName::MonotonicityScale => monotonicity(config, &model, Sweep::Scale, &mut report)?,
        ExperimentName::MonotonicityCost => monotonicity_cost(config, &model, &mut report)?,
        ExperimentName::IntensityComparison => intensity_comparison(config, &model, &mut report)?,
        ExperimentName::RobustnessSandwich => robustness_sandwich(config, &model, &mut report)?,
        ExperimentName::MagnitudeMonotonicity => magnitude_monotonicity(config, &model, &mut report)?,
        ExperimentName::BoundaryStrip => boundary_strip(config, &model, &mut report)?,
        ExperimentName::FilterConsistency => filter_consistency(config, &model, &mut report)?,
        ExperimentName::ExpectationIdentity => expectation_identity(config, &model, &mut report)?,
        ExperimentName::Concavity => concavity(config, &model, &mut report)?,
    }
    report.runtime_seconds = start.elapsed().as_secs_f64();
    info!("{name}: {} rows in {:.1} s", report.rows.len(), report.runtime_seconds);
    Ok(report)
}

/// Grid of step `dt` reaching at least `horizon` (default eight mean
/// disorder times).
fn grid_for(model: &ModelSpec, dt: f64, horizon: Option<f64>) -> Result<TimeGrid> {
    let target = horizon.unwrap_or_else(|| model.default_horizon());
    let steps = (target / dt - 1e-9).ceil().max(1.0);
    Ok(TimeGrid::new(dt, steps * dt)?)
}

fn scan_table(report: &mut ExperimentReport, sweep: &[(f64, ThresholdOptimum)]) {
    let mut t = Table::new("scan", &["sweep_value", "a", "mean", "half_width", "false_alarm", "delay"]);
    for (v, opt) in sweep {
        for row in &opt.scan {
            let e = &row.estimate;
            t.rows.push(vec![*v, row.a, e.mean, e.half_width, e.false_alarm_rate, e.mean_delay]);
        }
    }
    report.tables.push(t);
    let mut best = Table::new("best_threshold", &["sweep_value", "a_star", "mean", "std_error", "half_width"]);
    for (v, opt) in sweep {
        let e = &opt.estimate;
        best.rows.push(vec![*v, opt.a_star, e.mean, e.std_error, e.half_width]);
    }
    report.tables.push(best);
}

// ---------------------------------------------------------------------------
// Monotonicity in σ, magnitude scale and cost
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Sweep {
    Sigma,
    Scale,
    Cost,
}

impl Sweep {
    fn variant(&self, base: &ModelSpec, v: f64) -> std::result::Result<ModelSpec, ValidationError> {
        match self {
            Sweep::Sigma => base.with_sigma(base.sigma.scaled(v)),
            Sweep::Scale => base.with_magnitudes_scaled(v),
            Sweep::Cost => base.with_cost(base.cost.scaled(v)),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Sweep::Sigma => "sigma",
            Sweep::Scale => "k",
            Sweep::Cost => "c",
        }
    }
}

fn best_thresholds(
    cfg: &ExperimentConfig,
    base: &ModelSpec,
    sweep: Sweep,
    grid: &TimeGrid,
) -> Result<Vec<(f64, ThresholdOptimum)>> {
    cfg.sweep
        .par_iter()
        .map(|&v| {
            let m = sweep.variant(base, v)?;
            Ok((v, optimize_threshold(&m, grid, cfg.paths, cfg.seed, cfg.bracket)?))
        })
        .collect()
}

fn best_label(sweep: Sweep, v: f64) -> String {
    format!("best-threshold risk ({} x {v})", sweep.symbol())
}

/// Best-threshold risks along the sweep; risk increases with `σ` and
/// decreases with the magnitude scale.
fn monotonicity(cfg: &ExperimentConfig, base: &ModelSpec, sweep: Sweep, report: &mut ExperimentReport) -> Result<()> {
    let grid = grid_for(base, cfg.dt, cfg.horizon)?;
    report.meta("horizon", grid.horizon());
    let points = best_thresholds(cfg, base, sweep, &grid)?;
    let anchor = match sweep {
        Sweep::Sigma => "monotonicity.sigma",
        Sweep::Scale => "monotonicity.scale",
        Sweep::Cost => "monotonicity.cost",
    };
    for (v, opt) in &points {
        report.stat(Some(*v), &format!("{anchor}.point"), opt.estimate.quantity(best_label(sweep, *v)));
    }
    for w in points.windows(2) {
        let (v0, lo) = (&w[0].0, &w[0].1.estimate);
        let (v1, hi) = (&w[1].0, &w[1].1.estimate);
        let (q0, q1) = (lo.quantity(best_label(sweep, *v0)), hi.quantity(best_label(sweep, *v1)));
        let c = match sweep {
            Sweep::Scale => Comparison::le(anchor, q1, q0, 0.0),
            _ => Comparison::le(anchor, q0, q1, 0.0),
        };
        report.check(Some(*v0), c);
    }
    scan_table(report, &points);
    Ok(())
}

/// Cost sweep: stopping times do not depend on the cost, so losses on the
/// same paths are ordered path by path. Checked exactly at every
/// best threshold, and in the mean with tolerance zero; best-threshold
/// estimates are also chained under the confidence policy.
fn monotonicity_cost(cfg: &ExperimentConfig, base: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    monotonicity(cfg, base, Sweep::Cost, report)?;
    let grid = grid_for(base, cfg.dt, cfg.horizon)?;
    let a_stars: Vec<f64> = report.tables[1].rows.iter().map(|r| r[1]).collect();
    let costs: Vec<ModelSpec> = cfg
        .sweep
        .iter()
        .map(|&v| Sweep::Cost.variant(base, v))
        .collect::<std::result::Result<_, _>>()?;
    let losses: Vec<Vec<crate::risk::PathLoss>> = a_stars
        .par_iter()
        .map(|&a| path_losses(base, &StrategySpec::ThresholdOnTrue { a }, &grid, cfg.paths, cfg.seed))
        .collect::<std::result::Result<_, _>>()?;
    let totals: Vec<Vec<Vec<f64>>> = losses
        .iter()
        .map(|per_path| {
            costs
                .iter()
                .map(|m| per_path.iter().map(|l| l.with_cost(&m.cost).total()).collect())
                .collect()
        })
        .collect();
    let n = cfg.paths as f64;
    for i in 0..cfg.sweep.len().saturating_sub(1) {
        let (v0, v1) = (cfg.sweep[i], cfg.sweep[i + 1]);
        let worst = totals
            .iter()
            .flat_map(|per_cost| per_cost[i].iter().zip(&per_cost[i + 1]).map(|(x, y)| x - y))
            .fold(f64::NEG_INFINITY, f64::max);
        report.check(
            Some(v0),
            Comparison::le(
                "monotonicity.cost.pathwise",
                Quantity::exact(format!("max path loss difference (c x {v0}) - (c x {v1})"), worst),
                Quantity::exact("zero", 0.0),
                0.0,
            ),
        );
        let at = &totals[i + 1];
        let a = a_stars[i + 1];
        report.check(
            Some(v0),
            Comparison::le(
                "monotonicity.cost.mean",
                Quantity::exact(format!("risk at a = {a:.4} (c x {v0})"), pairwise_sum(&at[i]) / n),
                Quantity::exact(format!("risk at a = {a:.4} (c x {v1})"), pairwise_sum(&at[i + 1]) / n),
                0.0,
            ),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Intensity comparison
// ---------------------------------------------------------------------------

fn with_law(base: &ModelSpec, law: &RawDisorder, pi: f64) -> std::result::Result<ModelSpec, ValidationError> {
    let mut raw = base.to_raw();
    raw.disorder = law.clone();
    raw.pi_tilde = pi;
    validate(&raw)
}

/// Hazard breakpoints of a law, with `0`.
fn hazard_knots(law: &RawDisorder) -> Vec<f64> {
    let mut t = vec![0.0];
    if let RawDisorder::Piecewise { breaks, .. } = law {
        t.extend(breaks);
    }
    t
}

/// `hazard(upper) ≥ hazard(lower)` everywhere, both piecewise constant.
fn dominates(upper: &ModelSpec, lower: &ModelSpec, knots: &[f64]) -> bool {
    knots
        .iter()
        .all(|&t| upper.disorder.hazard(t) >= lower.disorder.hazard(t))
}

/// `U(π)` at the base rate against best-threshold risks under weaker
/// intensities.
fn intensity_comparison(cfg: &ExperimentConfig, base: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    if base.n() != 1 {
        return Err(ExperimentError::Config("intensity_comparison needs one atom".into()));
    }
    if cfg.alternatives.is_empty() {
        return Err(ExperimentError::Config("intensity_comparison needs alternatives".into()));
    }
    let k = base.constant_coefficients().ok_or(RiskError::NotConstant)?;
    report.meta("lambda", k.lambda);
    let sol = classical_solution(base)?;
    report.meta("threshold", sol.threshold);
    let pis = if cfg.pi_values.is_empty() {
        vec![base.pi_tilde()]
    } else {
        cfg.pi_values.clone()
    };
    let base_knots = hazard_knots(&RawDisorder::Exponential { rate: k.lambda });
    for law in &cfg.alternatives {
        let m = with_law(base, law, 0.0)?;
        let mut knots = base_knots.clone();
        knots.extend(hazard_knots(law));
        if !dominates(base, &m, &knots) {
            return Err(ExperimentError::Config(format!(
                "alternative {law:?} exceeds the base rate {}",
                k.lambda
            )));
        }
    }
    let mut jobs: Vec<(usize, f64, RawDisorder)> = Vec::new();
    for (j, law) in cfg.alternatives.iter().enumerate() {
        for &pi in &pis {
            jobs.push((j, pi, law.clone()));
        }
    }
    if let Some(d) = &cfg.dominating {
        for &pi in &pis {
            jobs.push((cfg.alternatives.len(), pi, d.clone()));
        }
    }
    let results: Vec<(usize, f64, ThresholdOptimum)> = jobs
        .par_iter()
        .map(|(j, pi, law)| {
            let m = with_law(base, law, *pi)?;
            let grid = grid_for(&m, cfg.dt, cfg.horizon)?;
            Ok((*j, *pi, optimize_threshold(&m, &grid, cfg.paths, cfg.seed, cfg.bracket)?))
        })
        .collect::<Result<_>>()?;
    let describe = |j: usize| -> String {
        let law = cfg.alternatives.get(j).or(cfg.dominating.as_ref()).expect("law");
        match law {
            RawDisorder::Exponential { rate } => format!("rate {rate}"),
            RawDisorder::Piecewise { breaks, rates } => format!("rates {rates:?} at breaks {breaks:?}"),
        }
    };
    let mut best = Table::new("best_threshold", &["law", "pi", "a_star", "mean", "std_error"]);
    for (j, pi, opt) in &results {
        best.rows.push(vec![*j as f64, *pi, opt.a_star, opt.estimate.mean, opt.estimate.std_error]);
        if *j == cfg.alternatives.len() {
            continue;
        }
        report.check(
            Some(*pi),
            Comparison::le(
                "intensity.dominance",
                Quantity::exact(format!("U at rate {}", k.lambda), sol.value_at(*pi)),
                opt.estimate.quantity(format!("best-threshold risk, {}", describe(*j))),
                0.0,
            ),
        );
    }
    if let Some(d) = &cfg.dominating {
        let dm = with_law(base, d, 0.0)?;
        let top = cfg.alternatives.len();
        for (j, law) in cfg.alternatives.iter().enumerate() {
            if !matches!(law, RawDisorder::Piecewise { .. }) {
                continue;
            }
            let lm = with_law(base, law, 0.0)?;
            let mut knots = hazard_knots(law);
            knots.extend(hazard_knots(d));
            if !dominates(&dm, &lm, &knots) {
                return Err(ExperimentError::Config(format!("dominating law does not dominate {law:?}")));
            }
            for &pi in &pis {
                let find = |jj: usize| {
                    results
                        .iter()
                        .find(|(a, p, _)| *a == jj && *p == pi)
                        .map(|r| r.2.estimate)
                        .expect("job ran")
                };
                report.check(
                    Some(pi),
                    Comparison::le(
                        "intensity.time_dependent",
                        find(top).quantity(format!("best-threshold risk, {}", describe(top))),
                        find(j).quantity(format!("best-threshold risk, {}", describe(j))),
                        0.0,
                    )
                    .non_gating(),
                );
            }
        }
    }
    report.tables.push(best);
    Ok(())
}

// ---------------------------------------------------------------------------
// Robustness and magnitude comparison
// ---------------------------------------------------------------------------

fn pi_list(cfg: &ExperimentConfig, model: &ModelSpec) -> Vec<f64> {
    if cfg.pi_values.is_empty() {
        vec![model.pi_tilde()]
    } else {
        cfg.pi_values.clone()
    }
}

fn robustness_table(reports: &[(f64, crate::risk::RobustnessReport)]) -> Table {
    let mut t = Table::new(
        "robustness",
        &[
            "pi", "a_l", "a_r", "v_delta_l", "v_delta_r", "correction", "v_mu_delta_l", "v_gamma",
            "v_mu_delta_r", "v_mu_upper", "a_mu_upper",
        ],
    );
    for (pi, r) in reports {
        t.rows.push(vec![
            *pi,
            r.a_l,
            r.a_r,
            r.v_delta_l,
            r.v_delta_r,
            r.correction,
            r.v_mu_delta_l.mean,
            r.v_gamma.mean,
            r.v_mu_delta_r.mean,
            r.v_mu_upper.mean,
            r.a_mu_upper,
        ]);
    }
    t
}

fn robustness_at(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    lambda_l: f64,
    lambda_r: f64,
) -> Result<Vec<(f64, crate::risk::RobustnessReport)>> {
    pi_list(cfg, model)
        .par_iter()
        .map(|&pi| {
            let m = model.with_pi_tilde(pi)?;
            let grid = grid_for(&m, cfg.dt, cfg.horizon)?;
            Ok((pi, robustness_risks(&m, lambda_l, lambda_r, cfg.paths, &grid, cfg.seed, cfg.bracket)?))
        })
        .collect()
}

fn robustness_sandwich(cfg: &ExperimentConfig, model: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    let k = model.constant_coefficients().ok_or(RiskError::NotConstant)?;
    let lambda_l = cfg.lambda_l.unwrap_or(k.lambda);
    let lambda_r = cfg.lambda_r.unwrap_or(k.lambda);
    report.meta("lambda", k.lambda);
    report.meta("lambda_l", lambda_l);
    report.meta("lambda_r", lambda_r);
    let results = robustness_at(cfg, model, lambda_l, lambda_r)?;
    for (pi, r) in &results {
        for c in &r.rows {
            report.check(Some(*pi), c.clone());
        }
    }
    report.tables.push(robustness_table(&results));
    Ok(())
}

/// Value comparison across magnitudes at a common rate:
/// `V^{δ_r} ≤ V^μ ≤ V^{δ_l}` and `0 ≤ V^μ_{δ_l} − V^μ ≤ V^{δ_l} − V^{δ_r}`,
/// with `V^μ` replaced by `V^{δ_r}` on the smaller side of an inequality and
/// by the best-threshold estimate on the larger side.
fn magnitude_monotonicity(cfg: &ExperimentConfig, model: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    let k = model.constant_coefficients().ok_or(RiskError::NotConstant)?;
    report.meta("lambda", k.lambda);
    let results = robustness_at(cfg, model, k.lambda, k.lambda)?;
    for (pi, r) in &results {
        let pi = Some(*pi);
        let best = r.v_mu_upper.quantity("best-threshold risk (upper bound of V^mu)");
        report.check(
            pi,
            Comparison::le("magnitude.lower", Quantity::exact("V^delta_r", r.v_delta_r), best.clone(), 0.0),
        );
        report.check(
            pi,
            Comparison::le(
                "magnitude.upper",
                best.clone(),
                Quantity::exact("V^delta_l", r.v_delta_l),
                DISCRETIZATION_ALLOWANCE,
            ),
        );
        report.check(
            pi,
            Comparison::le(
                "magnitude.mismatch_nonnegative",
                Quantity::exact("V^delta_r (lower bound of V^mu)", r.v_delta_r),
                r.v_mu_delta_l.quantity("V^mu_delta_l"),
                0.0,
            ),
        );
        let diff = Quantity::estimate(
            "V^mu_delta_l - best-threshold risk",
            r.v_mu_delta_l.mean - r.v_mu_upper.mean,
            r.v_mu_delta_l.std_error.hypot(r.v_mu_upper.std_error),
        );
        report.check(
            pi,
            Comparison::le(
                "magnitude.mismatch_bounded",
                diff,
                Quantity::exact("V^delta_l - V^delta_r", r.v_delta_l - r.v_delta_r),
                DISCRETIZATION_ALLOWANCE,
            ),
        );
    }
    report.tables.push(robustness_table(&results));
    Ok(())
}

// ---------------------------------------------------------------------------
// Value-iteration suites
// ---------------------------------------------------------------------------

fn dp_settings(cfg: &ExperimentConfig, n: usize) -> DpSettings {
    let mut s = DpSettings::default_for(n);
    if let Some(h) = cfg.h {
        s.h = h;
    }
    s.dt = cfg.dt;
    s
}

/// Every boundary node of the two-atom problem lies in the strip
/// `a_l − 2h ≤ ‖π‖₁ ≤ a_r + 2h` of the extreme one-atom thresholds.
fn boundary_strip(cfg: &ExperimentConfig, model: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    let k = model.constant_coefficients().ok_or(RiskError::NotConstant)?;
    let params = DpParams::from_model(model)?;
    let settings = dp_settings(cfg, params.n());
    let sol = solve_dp(&params, &settings)?;
    let h = sol.grid.h();
    report.meta("h", h);
    report.meta("iterations", sol.iterations as f64);
    let (l, r) = extreme_atoms(model);
    let a_l = solve(&ClassicalParams::from_coefficients(l, &k)?)?.threshold;
    let a_r = solve(&ClassicalParams::from_coefficients(r, &k)?)?.threshold;
    report.meta("a_l", a_l);
    report.meta("a_r", a_r);
    let nodes = extract_boundary(&sol)?;
    let min_norm = nodes.iter().map(|b| b.norm).fold(f64::INFINITY, f64::min);
    let max_norm = nodes.iter().map(|b| b.norm).fold(f64::NEG_INFINITY, f64::max);
    let lower = Quantity::exact("a_l - 2h", a_l - 2.0 * h);
    let upper = Quantity::exact("a_r + 2h", a_r + 2.0 * h);
    report.check(None, Comparison::le("strip.lower", lower.clone(), Quantity::exact("min boundary norm", min_norm), 0.0));
    report.check(None, Comparison::le("strip.upper", Quantity::exact("max boundary norm", max_norm), upper.clone(), 0.0));
    let norms = |stop: bool| {
        sol.grid
            .coords()
            .into_iter()
            .zip(&sol.stop_mask)
            .filter(move |(_, s)| **s == stop)
            .map(|(ij, _)| sol.grid.point(ij).iter().sum::<f64>())
    };
    let stop_min = norms(true).fold(f64::INFINITY, f64::min);
    let cont_max = norms(false).fold(f64::NEG_INFINITY, f64::max);
    report.check(None, Comparison::le("strip.stop_lower", lower, Quantity::exact("min stop-node norm", stop_min), 0.0));
    report.check(
        None,
        Comparison::le("strip.continuation_upper", Quantity::exact("max continuation-node norm", cont_max), upper, 0.0),
    );
    let n = params.n();
    let mut names: Vec<String> = (1..=n).map(|i| format!("pi_{i}")).collect();
    names.push("norm".into());
    let mut t = Table {
        name: "boundary".into(),
        columns: names,
        rows: Vec::new(),
    };
    for b in &nodes {
        let mut row = b.pi.clone();
        row.push(b.norm);
        t.rows.push(row);
    }
    report.tables.push(t);
    Ok(())
}

fn concavity(cfg: &ExperimentConfig, model: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    let params = DpParams::from_model(model)?;
    let settings = dp_settings(cfg, params.n());
    let sol = solve_dp(&params, &settings)?;
    report.meta("h", sol.grid.h());
    report.meta("iterations", sol.iterations as f64);
    report.meta("segments", cfg.segments as f64);
    let worst = concavity_check(&sol, cfg.segments, cfg.seed);
    report.check(
        None,
        Comparison::le(
            "concavity.second_difference",
            Quantity::exact("max positive second difference", worst),
            Quantity::exact("tolerance", CONCAVITY_TOLERANCE),
            0.0,
        ),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Filter suites
// ---------------------------------------------------------------------------

/// Mean sup-time gap between the exact and the SDE filter on each time step
/// of the sweep, all steps driven by the same Brownian paths; consecutive
/// ratios must lie in [`RATIO_WINDOW`].
fn filter_consistency(cfg: &ExperimentConfig, model: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    if cfg.sweep.is_empty() {
        return Err(ExperimentError::Config("filter_consistency needs time steps in sweep".into()));
    }
    let fine = cfg.sweep[0];
    let factors: Vec<usize> = cfg
        .sweep
        .iter()
        .map(|&dt| {
            let f = (dt / fine).round();
            if (f * fine - dt).abs() > 1e-9 * dt {
                Err(ExperimentError::Config(format!("time step {dt} is not a multiple of {fine}")))
            } else {
                Ok(f as usize)
            }
        })
        .collect::<Result<_>>()?;
    let coarse = *cfg.sweep.last().expect("non-empty");
    let target = cfg.horizon.unwrap_or_else(|| model.default_horizon());
    let grid = TimeGrid::new(fine, (target / coarse - 1e-9).ceil().max(1.0) * coarse)?;
    report.meta("horizon", grid.horizon());
    let errors: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let path = simulate_scenario(model, &grid, cfg.seed, p as u64);
            factors
                .iter()
                .map(|&f| {
                    let c = path.coarsen(f)?;
                    Ok(filter_exact(model, &c)?.sup_difference(&filter_sde(model, &c)?))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = cfg.paths as f64;
    let mut means = Vec::new();
    let mut t = Table::new("filter_gap", &["dt", "mean_sup_gap", "std_error"]);
    for (j, &dt) in cfg.sweep.iter().enumerate() {
        let col: Vec<f64> = errors.iter().map(|e| e[j]).collect();
        let mean = pairwise_sum(&col) / n;
        let var = pairwise_sum(&col.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>()) / (n - 1.0).max(1.0);
        let se = (var / n).sqrt();
        report.stat(Some(dt), "filter.gap", Quantity::estimate("mean sup-time filter gap", mean, se));
        t.rows.push(vec![dt, mean, se]);
        means.push(mean);
    }
    for j in 0..means.len().saturating_sub(1) {
        let ratio = means[j + 1] / means[j];
        let label = format!("gap ratio dt {} / {}", cfg.sweep[j + 1], cfg.sweep[j]);
        report.check(
            Some(cfg.sweep[j]),
            Comparison::le(
                "filter.ratio_lower",
                Quantity::exact("lower ratio bound", RATIO_WINDOW.0),
                Quantity::exact(label.clone(), ratio),
                0.0,
            ),
        );
        report.check(
            Some(cfg.sweep[j]),
            Comparison::le(
                "filter.ratio_upper",
                Quantity::exact(label, ratio),
                Quantity::exact("upper ratio bound", RATIO_WINDOW.1),
                0.0,
            ),
        );
    }
    report.tables.push(t);
    if let Some(k) = model.constant_coefficients() {
        specialization(cfg, model, &grid, k, report)?;
    }
    Ok(())
}

/// One-atom copy of the model: the exact filter must agree with the
/// Shiryaev statistic.
fn specialization(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    grid: &TimeGrid,
    k: crate::model::ConstantCoefficients,
    report: &mut ExperimentReport,
) -> Result<()> {
    let b = model.magnitudes()[0];
    let one = constant_model(&[(b, 1.0)], model.pi_tilde(), k.lambda, k.sigma, k.cost)?;
    let worst = (0..cfg.paths.min(10))
        .into_par_iter()
        .map(|p| {
            let path = simulate_scenario(&one, grid, cfg.seed, p as u64);
            let exact = filter_exact(&one, &path)?;
            let g = shiryaev_filter(b, k.lambda, k.sigma, one.pi_tilde(), &path)?;
            Ok(exact
                .pi_tilde
                .iter()
                .zip(&g)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    report.check(
        None,
        Comparison::le(
            "filter.specialization",
            Quantity::exact("sup |exact filter - Shiryaev filter|, one atom", worst),
            Quantity::exact("tolerance", SPECIALIZATION_TOLERANCE),
            0.0,
        ),
    );
    Ok(())
}

/// `E[Π̃_t] = P(Θ ≤ t)` within the confidence band at each checkpoint.
fn expectation_identity(cfg: &ExperimentConfig, model: &ModelSpec, report: &mut ExperimentReport) -> Result<()> {
    let checkpoints = if cfg.checkpoints.is_empty() {
        vec![0.0, 1.0, 5.0, 10.0, 20.0]
    } else {
        cfg.checkpoints.clone()
    };
    let last = checkpoints.iter().cloned().fold(0.0, f64::max);
    let grid = grid_for(model, cfg.dt, Some(cfg.horizon.unwrap_or(last).max(last).max(cfg.dt)))?;
    report.meta("horizon", grid.horizon());
    let rows = posterior_mean_check(model, cfg.paths, &grid, cfg.seed, &checkpoints)?;
    let mut t = Table::new("tower", &["t", "mean", "std_error", "cdf"]);
    for r in &rows {
        let mc = Quantity::estimate("MC mean of posterior mass", r.mean, r.std_error);
        let cdf = Quantity::exact("P(disorder <= t)", r.cdf);
        report.check(Some(r.t), Comparison::le("tower.upper", mc.clone(), cdf.clone(), 0.0));
        report.check(Some(r.t), Comparison::le("tower.lower", cdf, mc, 0.0));
        t.rows.push(vec![r.t, r.mean, r.std_error, r.cdf]);
    }
    report.tables.push(t);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_raw() -> RawModel {
        constant_model(&[(0.5, 0.5), (2.0, 0.5)], 0.1, 0.2, 1.0, 1.0)
            .unwrap()
            .to_raw()
    }

    fn config(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            name: name.into(),
            model: reference_raw(),
            sweep: vec![],
            paths: 2_000,
            dt: 1e-2,
            horizon: None,
            seed: 3,
            bracket: default_bracket(),
            lambda_l: None,
            lambda_r: None,
            h: None,
            checkpoints: vec![],
            segments: 20,
            pi_values: vec![],
            alternatives: vec![],
            dominating: None,
        }
    }

    #[test]
    fn names_round_trip() {
        for n in ExperimentName::ALL {
            assert_eq!(n.as_str().parse::<ExperimentName>().unwrap(), n);
        }
        assert!(matches!(
            "nope".parse::<ExperimentName>(),
            Err(ExperimentError::UnknownExperiment(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = config("monotonicity_sigma");
        c.sweep = vec![2.0, 1.0];
        assert!(matches!(c.validate(), Err(ExperimentError::Config(_))));
        c.sweep = vec![1.0, 2.0];
        c.paths = 10;
        assert!(matches!(c.validate(), Err(ExperimentError::Config(_))));
        c.paths = MIN_RISK_PATHS;
        assert!(c.validate().is_ok());
        c.name = "bogus".into();
        assert!(matches!(run_experiment(&c), Err(ExperimentError::UnknownExperiment(_))));
    }

    #[test]
    fn config_parses_with_defaults() {
        let text = r#"{"name": "concavity", "model": {"atoms": [{"b": 1, "p0": 1, "p1": 1}],
            "pi_tilde": 0, "disorder": {"type": "exponential", "rate": 0.1}, "sigma": 1, "cost": 1}}"#;
        let c = ExperimentConfig::from_json_str(text, "inline").unwrap();
        assert_eq!(c.paths, DEFAULT_PATHS);
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.bracket, (0.01, 0.61));
        assert_eq!(c.segments, 200);
        let bad = text.replace("\"concavity\",", "\"concavity\", \"extra\": 1,");
        assert!(matches!(
            ExperimentConfig::from_json_str(&bad, "inline"),
            Err(ExperimentError::Parse { .. })
        ));
    }

    #[test]
    fn single_point_sweep_passes_vacuously() {
        let mut c = config("monotonicity_scale");
        c.sweep = vec![1.0];
        c.horizon = Some(20.0);
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.checks().count(), 0);
        assert!(r.passed());
    }

    #[test]
    fn cost_sweep_is_pathwise_ordered() {
        let mut c = config("monotonicity_cost");
        c.sweep = vec![0.5, 1.0, 2.0];
        c.horizon = Some(20.0);
        let r = run_experiment(&c).unwrap();
        let pathwise: Vec<_> = r.rows.iter().filter(|x| x.anchor == "monotonicity.cost.pathwise").collect();
        assert_eq!(pathwise.len(), 2);
        assert!(pathwise.iter().all(|x| x.pass && x.statistic.value <= 0.0));
        let mean: Vec<_> = r.rows.iter().filter(|x| x.anchor == "monotonicity.cost.mean").collect();
        assert!(mean.iter().all(|x| x.pass));
    }

    #[test]
    fn tower_rows_and_csv() {
        let mut c = config("expectation_identity");
        c.checkpoints = vec![0.0, 1.0, 5.0];
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.checks().count(), 6);
        assert!(r.passed(), "{:#?}", r.failures());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(r.to_json().contains("\"tower.upper\""));
        assert!(!r.to_json().contains("runtime"));
    }

    #[test]
    fn filter_consistency_rejects_bad_steps() {
        let mut c = config("filter_consistency");
        c.paths = 10;
        c.sweep = vec![0.003, 0.005];
        assert!(matches!(run_experiment(&c), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn intensity_rejects_larger_rates() {
        let mut c = config("intensity_comparison");
        c.model = constant_model(&[(1.0, 1.0)], 0.0, 0.2, 1.0, 1.0).unwrap().to_raw();
        c.alternatives = vec![RawDisorder::Exponential { rate: 0.3 }];
        assert!(matches!(run_experiment(&c), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("ab"), "ab");
    }
}
