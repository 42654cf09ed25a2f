//! Monte Carlo Bayes risk `E[1{τ<Θ} + ∫_Θ^τ c(u) du]` of stopping rules.
//!
//! Paths are simulated with the seeded scenario generator, so two calls with
//! the same `(master_seed, n_paths, grid)` share all randomness (common
//! random numbers). A stopping rule stops at the first grid time at which
//! its statistic reaches the threshold; rules that never trigger stop at the
//! horizon and are counted as truncated.
//!
//! Threshold rules are evaluated for many thresholds in one pass: for
//! ascending thresholds the stopping times are ordered, so each path runs
//! until the largest threshold is reached. The comparison uses the
//! complement `1 − statistic`, which both filters compute without
//! cancellation.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::filter::{ExactFilter, FilterError};
use crate::model::{ModelSpec, Schedule};
use crate::shiryaev::{ClassicalParams, ShiryaevError, ShiryaevSolution};
use crate::sim::{draw_scenario, IncrementStream, Scenario, TimeGrid};
use crate::stats::{
    chunks, Comparison, Moments, Quantity, DISCRETIZATION_ALLOWANCE, Z99,
};

/// Points of the threshold scan.
pub const SCAN_POINTS: usize = 61;
/// Width below which golden-section refinement stops.
pub const GOLDEN_TOLERANCE: f64 = 1e-4;
/// Share of truncated paths above which a warning is raised.
pub const TRUNCATION_WARNING: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Shiryaev(#[from] ShiryaevError),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("invalid bracket [{lo}, {hi}]: need 0 < lo < hi < 1")]
    Bracket { lo: f64, hi: f64 },
    #[error("flat objective: scan range {range:.3e} is below twice the largest half-width {half_width:.3e}; increase n_paths")]
    FlatObjective { range: f64, half_width: f64 },
    #[error("this computation needs constant sigma, cost and disorder rate")]
    NotConstant,
    #[error("n_paths must be positive")]
    NoPaths,
}

/// Statistic monitored by a threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    /// `Π̃` of the correctly specified model.
    TruePosterior,
    /// `g_l` of the one-atom model `(δ_l, rate λ_l)`.
    Mismatched { l: f64, lambda_l: f64 },
}

/// Stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Stop when `Π̃ ≥ a`.
    ThresholdOnTrue { a: f64 },
    /// Stop when `g_l ≥ a`.
    ThresholdMismatched { l: f64, lambda_l: f64, a: f64 },
    /// Stop at the deterministic time `t`.
    FixedTime { t: f64 },
}

impl StrategySpec {
    pub fn validate(&self) -> Result<(), RiskError> {
        let bad = |m: String| Err(RiskError::Strategy(m));
        match *self {
            StrategySpec::ThresholdOnTrue { a } | StrategySpec::ThresholdMismatched { a, .. }
                if !(a > 0.0 && a <= 1.0) =>
            {
                bad(format!("threshold {a} outside (0, 1]"))
            }
            StrategySpec::ThresholdMismatched { l, lambda_l, .. }
                if !(l != 0.0 && l.is_finite() && lambda_l > 0.0 && lambda_l.is_finite()) =>
            {
                bad(format!("mismatched model needs l != 0 and lambda_l > 0 (l = {l}, lambda_l = {lambda_l})"))
            }
            StrategySpec::FixedTime { t } if !(t >= 0.0 && t.is_finite()) => {
                bad(format!("fixed time {t} must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }

    fn threshold(&self) -> Option<(Statistic, f64)> {
        match *self {
            StrategySpec::ThresholdOnTrue { a } => Some((Statistic::TruePosterior, a)),
            StrategySpec::ThresholdMismatched { l, lambda_l, a } => {
                Some((Statistic::Mismatched { l, lambda_l }, a))
            }
            StrategySpec::FixedTime { .. } => None,
        }
    }
}

/// Text form: `true:A`, `mismatched:L,LAMBDA_L,A`, `fixed:T`.
impl FromStr for StrategySpec {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, RiskError> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| RiskError::Strategy(format!("expected KIND:ARGS, got '{s}'")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RiskError::Strategy(format!("'{args}': {e}")))?;
        let spec = match (kind, nums.as_slice()) {
            ("true", &[a]) => StrategySpec::ThresholdOnTrue { a },
            ("mismatched", &[l, lambda_l, a]) => StrategySpec::ThresholdMismatched { l, lambda_l, a },
            ("fixed", &[t]) => StrategySpec::FixedTime { t },
            _ => {
                return Err(RiskError::Strategy(format!(
                    "unknown strategy '{s}' (use true:A, mismatched:L,LAMBDA_L,A or fixed:T)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::ThresholdOnTrue { a } => write!(f, "true:{a}"),
            StrategySpec::ThresholdMismatched { l, lambda_l, a } => {
                write!(f, "mismatched:{l},{lambda_l},{a}")
            }
            StrategySpec::FixedTime { t } => write!(f, "fixed:{t}"),
        }
    }
}

/// Monte Carlo risk with its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// `Z99 · std_error`.
    pub half_width: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub false_alarm_rate: f64,
    pub mean_delay: f64,
    pub truncated: usize,
}

impl RiskEstimate {
    fn from_acc(acc: &Acc, grid: &TimeGrid) -> Self {
        let se = acc.total.std_error();
        Self {
            mean: acc.fa.mean + acc.delay.mean,
            std_error: se,
            half_width: Z99 * se,
            n_paths: acc.total.count as usize,
            dt: grid.dt(),
            horizon: grid.horizon(),
            false_alarm_rate: acc.fa.mean,
            mean_delay: acc.delay.mean,
            truncated: acc.truncated,
        }
    }

    pub fn truncation_rate(&self) -> f64 {
        if self.n_paths == 0 {
            0.0
        } else {
            self.truncated as f64 / self.n_paths as f64
        }
    }

    /// Whether more than 1% of paths reached the horizon.
    pub fn horizon_too_short(&self) -> bool {
        self.truncation_rate() > TRUNCATION_WARNING
    }

    pub fn quantity(&self, label: impl Into<String>) -> Quantity {
        Quantity::estimate(label, self.mean, self.std_error)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    fa: Moments,
    delay: Moments,
    total: Moments,
    truncated: usize,
}

impl Acc {
    fn push(&mut self, loss: PathLoss) {
        let fa = if loss.false_alarm { 1.0 } else { 0.0 };
        self.fa.push(fa);
        self.delay.push(loss.delay);
        self.total.push(fa + loss.delay);
        self.truncated += loss.truncated as usize;
    }

    fn merge(&mut self, other: &Acc) {
        self.fa.merge(&other.fa);
        self.delay.merge(&other.delay);
        self.total.merge(&other.total);
        self.truncated += other.truncated;
    }
}

/// Loss of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathLoss {
    pub tau: f64,
    pub theta: f64,
    pub false_alarm: bool,
    /// `∫_Θ^τ c(u) du` on `{τ > Θ}`, else 0.
    pub delay: f64,
    pub truncated: bool,
}

impl PathLoss {
    pub fn total(&self) -> f64 {
        self.delay + if self.false_alarm { 1.0 } else { 0.0 }
    }

    /// Same stopping time scored under another cost rate.
    pub fn with_cost(&self, cost: &Schedule) -> PathLoss {
        let delay = if self.tau > self.theta {
            cost.integral(self.tau) - cost.integral(self.theta)
        } else {
            0.0
        };
        PathLoss { delay, ..*self }
    }
}

fn path_loss(model: &ModelSpec, scenario: &Scenario, tau: f64, truncated: bool) -> PathLoss {
    let theta = scenario.theta;
    let delay = if tau > theta {
        model.cost.integral(tau) - model.cost.integral(theta)
    } else {
        0.0
    };
    PathLoss {
        tau,
        theta,
        false_alarm: tau < theta,
        delay,
        truncated,
    }
}

// ---------------------------------------------------------------------------
// Statistics along a path
// ---------------------------------------------------------------------------

/// Shiryaev statistic in linear odds form `φ = g/(1−g)`:
/// `φ_{k+1} = e^{λ_l dt}((φ_k + κ)e^{ℓ_k} + κ)`, `κ = (1 − e^{−λ_l dt})/2`.
/// Agrees with [`crate::filter::ShiryaevFilter`] to rounding.
#[derive(Debug, Clone)]
struct OddsKernel {
    odds: f64,
    growth: f64,
    kappa: f64,
    gain: f64,
    compensator: f64,
}

impl OddsKernel {
    fn new(l: f64, lambda_l: f64, sigma: f64, pi_tilde: f64, dt: f64) -> Self {
        let var = sigma * sigma;
        Self {
            odds: (pi_tilde / (1.0 - pi_tilde)).min(f64::MAX),
            growth: (lambda_l * dt).exp(),
            kappa: -0.5 * (-lambda_l * dt).exp_m1(),
            gain: l / var,
            compensator: 0.5 * l * l / var * dt,
        }
    }

    #[inline]
    fn step(&mut self, dy: f64) -> f64 {
        let e = (self.gain * dy - self.compensator).exp();
        self.odds = (self.growth * ((self.odds + self.kappa) * e + self.kappa)).min(1e300);
        1.0 / (1.0 + self.odds)
    }
}

enum Kernel<'m> {
    Exact(ExactFilter<'m>),
    Odds(OddsKernel),
}

impl Kernel<'_> {
    #[inline]
    fn step(&mut self, dy: f64) -> Result<f64, FilterError> {
        match self {
            Kernel::Exact(f) => {
                f.step(dy)?;
                Ok(f.complement())
            }
            Kernel::Odds(k) => Ok(k.step(dy)),
        }
    }
}

/// Builds the per-path statistic and its initial complement.
struct KernelFactory<'m> {
    model: &'m ModelSpec,
    dt: f64,
    odds: Option<(f64, f64, f64)>,
    start: f64,
}

impl<'m> KernelFactory<'m> {
    fn new(model: &'m ModelSpec, stat: Statistic, dt: f64) -> Result<Self, RiskError> {
        let odds = match stat {
            Statistic::Mismatched { l, lambda_l } => {
                let sigma = model.sigma.as_constant().ok_or(RiskError::NotConstant)?;
                Some((l, lambda_l, sigma))
            }
            Statistic::TruePosterior => match (model.n(), model.constant_coefficients()) {
                (1, Some(k)) => Some((model.magnitudes()[0], k.lambda, k.sigma)),
                _ => None,
            },
        };
        Ok(Self {
            model,
            dt,
            odds,
            start: 1.0 - model.pi_tilde(),
        })
    }

    fn make(&self) -> Kernel<'m> {
        match self.odds {
            Some((l, lambda_l, sigma)) => Kernel::Odds(OddsKernel::new(
                l,
                lambda_l,
                sigma,
                self.model.pi_tilde(),
                self.dt,
            )),
            None => Kernel::Exact(ExactFilter::new(self.model, self.dt)),
        }
    }
}

/// Complement levels `1 − a` for ascending thresholds.
fn levels_of(thresholds: &[f64]) -> Vec<f64> {
    thresholds.iter().map(|a| 1.0 - a).collect()
}

/// Fills `stops[j]` with the stopping step for `levels[j]` (descending).
fn stop_steps(
    factory: &KernelFactory,
    model: &ModelSpec,
    grid: &TimeGrid,
    seed: u64,
    path: u64,
    levels: &[f64],
    stops: &mut [Option<usize>],
) -> Result<Scenario, FilterError> {
    let scenario = draw_scenario(model, seed, path);
    let mut kernel = factory.make();
    let mut q = factory.start;
    let mut j = 0;
    let m = levels.len();
    let mut stream = IncrementStream::new(model, scenario, grid, seed, path);
    let mut k = 0;
    loop {
        while j < m && q <= levels[j] {
            stops[j] = Some(k);
            j += 1;
        }
        if j == m {
            break;
        }
        match stream.next() {
            Some(inc) => {
                q = kernel.step(inc.dy)?;
                k += 1;
            }
            None => break,
        }
    }
    stops[j..].iter_mut().for_each(|s| *s = None);
    Ok(scenario)
}

fn check_paths(n_paths: usize) -> Result<(), RiskError> {
    if n_paths == 0 {
        Err(RiskError::NoPaths)
    } else {
        Ok(())
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), RiskError> {
    for w in thresholds.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(RiskError::Strategy("thresholds must be ascending".into()));
        }
    }
    for &a in thresholds {
        StrategySpec::ThresholdOnTrue { a }.validate()?;
    }
    Ok(())
}

fn warn_truncation(est: &RiskEstimate, what: &str) {
    if est.horizon_too_short() {
        warn!(
            "HorizonTooShort: {:.2}% of paths truncated at T = {} for {what}",
            100.0 * est.truncation_rate(),
            est.horizon
        );
    }
}

/// Risks of the rules `{statistic ≥ a_j}` for ascending `thresholds`, from
/// a single pass over `n_paths` paths.
pub fn estimate_thresholds(
    model: &ModelSpec,
    stat: Statistic,
    thresholds: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<RiskEstimate>, RiskError> {
    check_paths(n_paths)?;
    check_thresholds(thresholds)?;
    if let Statistic::Mismatched { l, lambda_l } = stat {
        StrategySpec::ThresholdMismatched { l, lambda_l, a: 1.0 }.validate()?;
    }
    let factory = KernelFactory::new(model, stat, grid.dt())?;
    let levels = levels_of(thresholds);
    let per_chunk: Vec<Result<Vec<Acc>, FilterError>> = chunks(n_paths)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![Acc::default(); levels.len()];
            let mut stops = vec![None; levels.len()];
            for p in range {
                let sc = stop_steps(&factory, model, grid, master_seed, p as u64, &levels, &mut stops)?;
                for (a, s) in acc.iter_mut().zip(&stops) {
                    let loss = match s {
                        Some(k) => path_loss(model, &sc, grid.time(*k), false),
                        None => path_loss(model, &sc, grid.horizon(), true),
                    };
                    a.push(loss);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Acc::default(); levels.len()];
    for chunk in per_chunk {
        for (t, c) in total.iter_mut().zip(chunk?) {
            t.merge(&c);
        }
    }
    let out: Vec<RiskEstimate> = total.iter().map(|a| RiskEstimate::from_acc(a, grid)).collect();
    for (est, a) in out.iter().zip(thresholds) {
        warn_truncation(est, &format!("threshold {a}"));
    }
    Ok(out)
}

/// Per-path losses of one strategy, in path order.
pub fn path_losses(
    model: &ModelSpec,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<PathLoss>, RiskError> {
    strategy.validate()?;
    match strategy.threshold() {
        None => {
            let StrategySpec::FixedTime { t } = *strategy else {
                unreachable!()
            };
            Ok((0..n_paths)
                .map(|p| {
                    let sc = draw_scenario(model, master_seed, p as u64);
                    path_loss(model, &sc, t, false)
                })
                .collect())
        }
        Some((stat, a)) => {
            let factory = KernelFactory::new(model, stat, grid.dt())?;
            let levels = [1.0 - a];
            let per_chunk: Vec<Result<Vec<PathLoss>, FilterError>> = chunks(n_paths)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|range| {
                    let mut stops = [None];
                    range
                        .map(|p| {
                            let sc = stop_steps(&factory, model, grid, master_seed, p as u64, &levels, &mut stops)?;
                            Ok(match stops[0] {
                                Some(k) => path_loss(model, &sc, grid.time(k), false),
                                None => path_loss(model, &sc, grid.horizon(), true),
                            })
                        })
                        .collect()
                })
                .collect();
            let mut out = Vec::with_capacity(n_paths);
            for c in per_chunk {
                out.extend(c?);
            }
            Ok(out)
        }
    }
}

/// Risk of a single strategy.
pub fn estimate_risk(
    model: &ModelSpec,
    strategy: &StrategySpec,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<RiskEstimate, RiskError> {
    check_paths(n_paths)?;
    strategy.validate()?;
    match strategy.threshold() {
        Some((stat, a)) => Ok(estimate_thresholds(model, stat, &[a], grid, n_paths, master_seed)?[0]),
        None => {
            let losses = path_losses(model, strategy, grid, n_paths, master_seed)?;
            let mut acc = Acc::default();
            losses.into_iter().for_each(|l| acc.push(l));
            Ok(RiskEstimate::from_acc(&acc, grid))
        }
    }
}

// ---------------------------------------------------------------------------
// Threshold optimization
// ---------------------------------------------------------------------------

/// One row of a threshold scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub a: f64,
    pub estimate: RiskEstimate,
}

/// Result of [`optimize_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdOptimum {
    pub a_star: f64,
    pub estimate: RiskEstimate,
    pub scan: Vec<ScanRow>,
    /// Golden-section evaluations `(a, mean)`.
    pub refinement: Vec<(f64, f64)>,
}

impl ThresholdOptimum {
    /// `a,mean,half_width,false_alarm,delay` rows.
    pub fn write_scan_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "a,mean,half_width,false_alarm,delay")?;
        for r in &self.scan {
            let e = &r.estimate;
            writeln!(
                out,
                "{},{},{},{},{}",
                r.a, e.mean, e.half_width, e.false_alarm_rate, e.mean_delay
            )?;
        }
        Ok(())
    }
}

/// Record of a path for thresholds inside a band: the successive new
/// minima of the complement, once inside the band, with their steps.
struct BandRecord {
    scenario: Scenario,
    minima: Vec<(f64, u32)>,
}

impl BandRecord {
    /// Stopping step for complement level `level`, if reached.
    fn stop(&self, level: f64) -> Option<usize> {
        self.minima
            .iter()
            .find(|(q, _)| *q <= level)
            .map(|(_, k)| *k as usize)
    }
}

fn band_records(
    model: &ModelSpec,
    stat: Statistic,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    lo: f64,
    hi: f64,
) -> Result<Vec<BandRecord>, RiskError> {
    let factory = KernelFactory::new(model, stat, grid.dt())?;
    let (top, bottom) = (1.0 - lo, 1.0 - hi);
    let per_chunk: Vec<Result<Vec<BandRecord>, FilterError>> = chunks(n_paths)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|range| {
            range
                .map(|p| {
                    let scenario = draw_scenario(model, master_seed, p as u64);
                    let mut kernel = factory.make();
                    let mut stream = IncrementStream::new(model, scenario, grid, master_seed, p as u64);
                    let mut minima = Vec::new();
                    let mut q = factory.start;
                    let mut low = f64::INFINITY;
                    let mut k: u32 = 0;
                    loop {
                        if q < low {
                            low = q;
                            if q <= top {
                                minima.push((q, k));
                            }
                        }
                        if low <= bottom {
                            break;
                        }
                        match stream.next() {
                            Some(inc) => {
                                q = kernel.step(inc.dy)?;
                                k += 1;
                            }
                            None => break,
                        }
                    }
                    Ok(BandRecord { scenario, minima })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n_paths);
    for c in per_chunk {
        out.extend(c?);
    }
    Ok(out)
}

fn records_estimate(
    model: &ModelSpec,
    grid: &TimeGrid,
    records: &[BandRecord],
    a: f64,
) -> RiskEstimate {
    let level = 1.0 - a;
    let mut total = Acc::default();
    for chunk in records.chunks(crate::stats::CHUNK) {
        let mut acc = Acc::default();
        for r in chunk {
            acc.push(match r.stop(level) {
                Some(k) => path_loss(model, &r.scenario, grid.time(k), false),
                None => path_loss(model, &r.scenario, grid.horizon(), true),
            });
        }
        total.merge(&acc);
    }
    RiskEstimate::from_acc(&total, grid)
}

/// Uniform scan points on `[lo, hi]`.
pub fn scan_points(lo: f64, hi: f64) -> Vec<f64> {
    let m = SCAN_POINTS - 1;
    (0..=m).map(|j| lo + (hi - lo) * j as f64 / m as f64).collect()
}

/// Best threshold rule on `Π̃`: a 61-point common-random-numbers scan of
/// `bracket`, then golden-section search between the neighbours of the scan
/// minimizer on the same paths. The minimum is an upper-bound estimate of
/// the optimal risk.
pub fn optimize_threshold(
    model: &ModelSpec,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    bracket: (f64, f64),
) -> Result<ThresholdOptimum, RiskError> {
    optimize_statistic_threshold(model, Statistic::TruePosterior, grid, n_paths, master_seed, bracket)
}

/// [`optimize_threshold`] for an arbitrary statistic.
pub fn optimize_statistic_threshold(
    model: &ModelSpec,
    stat: Statistic,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    bracket: (f64, f64),
) -> Result<ThresholdOptimum, RiskError> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(RiskError::Bracket { lo, hi });
    }
    let points = scan_points(lo, hi);
    let scan_est = estimate_thresholds(model, stat, &points, grid, n_paths, master_seed)?;
    let scan: Vec<ScanRow> = points
        .iter()
        .zip(&scan_est)
        .map(|(&a, &estimate)| ScanRow { a, estimate })
        .collect();
    let means: Vec<f64> = scan_est.iter().map(|e| e.mean).collect();
    let (best, _) = means
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty scan");
    let range = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - means.iter().cloned().fold(f64::INFINITY, f64::min);
    let half_width = scan_est.iter().map(|e| e.half_width).fold(0.0, f64::max);
    if range == 0.0 || range < 2.0 * half_width {
        return Err(RiskError::FlatObjective { range, half_width });
    }
    let left = points[best.saturating_sub(1)];
    let right = points[(best + 1).min(points.len() - 1)];
    let records = band_records(model, stat, grid, n_paths, master_seed, left, right)?;
    let eval = |a: f64| records_estimate(model, grid, &records, a).mean;
    let mut refinement = Vec::new();
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x0, mut x3) = (left, right);
    let mut x1 = x3 - ratio * (x3 - x0);
    let mut x2 = x0 + ratio * (x3 - x0);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    refinement.push((x1, f1));
    refinement.push((x2, f2));
    while x3 - x0 > GOLDEN_TOLERANCE {
        if f1 <= f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - ratio * (x3 - x0);
            f1 = eval(x1);
            refinement.push((x1, f1));
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + ratio * (x3 - x0);
            f2 = eval(x2);
            refinement.push((x2, f2));
        }
    }
    let mut a_star = points[best];
    let mut f_star = means[best];
    for &(a, f) in &refinement {
        if f < f_star {
            a_star = a;
            f_star = f;
        }
    }
    let estimate = if a_star == points[best] {
        scan_est[best]
    } else {
        records_estimate(model, grid, &records, a_star)
    };
    Ok(ThresholdOptimum {
        a_star,
        estimate,
        scan,
        refinement,
    })
}

// ---------------------------------------------------------------------------
// Robustness quantities
// ---------------------------------------------------------------------------

/// Estimates and exact values entering the robustness inequalities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub l: f64,
    pub lambda_l: f64,
    pub r: f64,
    pub lambda_r: f64,
    pub pi_tilde: f64,
    pub a_l: f64,
    pub a_r: f64,
    /// `V^{δ_l}(π̃)` with rate `λ_l`.
    pub v_delta_l: f64,
    /// `V^{δ_r}(π̃)` with rate `λ_r`.
    pub v_delta_r: f64,
    /// `c(λ−λ_l)/(λλ_l)·(1−π̃)`.
    pub correction: f64,
    /// Risk of `τ^μ_{δ_l}`: stop when `g_l ≥ a_l`.
    pub v_mu_delta_l: RiskEstimate,
    /// Risk of `γ^μ_{δ_l}`: stop when `Π̃ ≥ a_l`.
    pub v_gamma: RiskEstimate,
    /// Risk of `τ^μ_{δ_r}`: stop when `g_r ≥ a_r`.
    pub v_mu_delta_r: RiskEstimate,
    /// Best threshold rule on `Π̃` (upper bound for `V^μ`).
    pub v_mu_upper: RiskEstimate,
    pub a_mu_upper: f64,
    pub rows: Vec<Comparison>,
}

/// Smallest and largest `|b|` atoms with positive `μ¹` weight, with sign.
pub fn extreme_atoms(model: &ModelSpec) -> (f64, f64) {
    let atoms: Vec<f64> = model
        .magnitudes()
        .iter()
        .zip(model.prior1.weights())
        .filter(|(_, p)| **p > 0.0)
        .map(|(b, _)| *b)
        .collect();
    let l = atoms.iter().cloned().min_by(|x, y| x.abs().total_cmp(&y.abs())).expect("atoms");
    let r = atoms.iter().cloned().max_by(|x, y| x.abs().total_cmp(&y.abs())).expect("atoms");
    (l, r)
}

/// Evaluates the three robustness chains for `l = argmin|b|`, `r = argmax|b|`.
///
/// `V^μ` is bracketed by computable values: on the smaller side of an
/// inequality it is replaced by the lower bound `V^{δ_r}` (rate `λ_r ≥ λ`),
/// on the larger side by the best-threshold estimate. Monte Carlo values
/// compared from below against exact values get the grid allowance.
#[allow(clippy::too_many_arguments)]
pub fn robustness_risks(
    model: &ModelSpec,
    lambda_l: f64,
    lambda_r: f64,
    n_paths: usize,
    grid: &TimeGrid,
    master_seed: u64,
    bracket: (f64, f64),
) -> Result<RobustnessReport, RiskError> {
    let k = model.constant_coefficients().ok_or(RiskError::NotConstant)?;
    if lambda_l > k.lambda {
        return Err(RiskError::Strategy(format!(
            "lambda_l = {lambda_l} must not exceed lambda = {}",
            k.lambda
        )));
    }
    if lambda_r < k.lambda {
        return Err(RiskError::Strategy(format!(
            "lambda_r = {lambda_r} must not be below lambda = {}",
            k.lambda
        )));
    }
    let (l, r) = extreme_atoms(model);
    let pi = model.pi_tilde();
    let sol_l = crate::shiryaev::solve(&ClassicalParams::new(l, k.sigma, lambda_l, k.cost)?)?;
    let sol_r = crate::shiryaev::solve(&ClassicalParams::new(r, k.sigma, lambda_r, k.cost)?)?;
    let (a_l, a_r) = (sol_l.threshold, sol_r.threshold);
    let v_delta_l = sol_l.value_at(pi);
    let v_delta_r = sol_r.value_at(pi);
    let correction = k.cost * (k.lambda - lambda_l) / (k.lambda * lambda_l) * (1.0 - pi);

    let v_mu_delta_l = estimate_risk(
        model,
        &StrategySpec::ThresholdMismatched { l, lambda_l, a: a_l },
        grid,
        n_paths,
        master_seed,
    )?;
    let v_gamma = estimate_risk(model, &StrategySpec::ThresholdOnTrue { a: a_l }, grid, n_paths, master_seed)?;
    let v_mu_delta_r = estimate_risk(
        model,
        &StrategySpec::ThresholdMismatched { l: r, lambda_l: lambda_r, a: a_r },
        grid,
        n_paths,
        master_seed,
    )?;
    let upper = optimize_threshold(model, grid, n_paths, master_seed, bracket)?;

    let lower_mu = || Quantity::exact("V^delta_r (lower bound of V^mu)", v_delta_r);
    let upper_mu = || upper.estimate.quantity("best-threshold risk (upper bound of V^mu)");
    let rows = vec![
        Comparison::le(
            "robustness.mismatched_lower",
            lower_mu(),
            v_mu_delta_l.quantity("V^mu_delta_l"),
            0.0,
        ),
        Comparison::le(
            "robustness.mismatched_upper",
            v_mu_delta_l.quantity("V^mu_delta_l"),
            Quantity::exact("V^delta_l + c(lambda-lambda_l)/(lambda lambda_l)(1-pi)", v_delta_l + correction),
            DISCRETIZATION_ALLOWANCE,
        ),
        Comparison::le(
            "robustness.threshold_lower",
            lower_mu(),
            v_gamma.quantity("gamma-risk"),
            0.0,
        ),
        Comparison::le(
            "robustness.threshold_upper",
            v_gamma.quantity("gamma-risk"),
            Quantity::exact("V^delta_l", v_delta_l),
            DISCRETIZATION_ALLOWANCE,
        ),
        Comparison::le(
            "robustness.overestimate_lower",
            Quantity::exact("V^delta_r", v_delta_r),
            upper_mu(),
            0.0,
        ),
        Comparison::le(
            "robustness.overestimate_upper",
            lower_mu(),
            v_mu_delta_r.quantity("V^mu_delta_r"),
            0.0,
        ),
    ];
    Ok(RobustnessReport {
        l,
        lambda_l,
        r,
        lambda_r,
        pi_tilde: pi,
        a_l,
        a_r,
        v_delta_l,
        v_delta_r,
        correction,
        v_mu_delta_l,
        v_gamma,
        v_mu_delta_r,
        v_mu_upper: upper.estimate,
        a_mu_upper: upper.a_star,
        rows,
    })
}

/// Exact `U(π̃)` of the one-atom problem matching a constant-coefficient model.
pub fn classical_solution(model: &ModelSpec) -> Result<ShiryaevSolution, RiskError> {
    let k = model.constant_coefficients().ok_or(RiskError::NotConstant)?;
    if model.n() != 1 {
        return Err(RiskError::Strategy("classical solution needs one atom".into()));
    }
    Ok(crate::shiryaev::solve(&ClassicalParams::from_coefficients(model.magnitudes()[0], &k)?)?)
}
