//! Problem instance for quickest disorder detection.
//!
//! A [`ModelSpec`] bundles the two drift-magnitude priors (one for a disorder
//! that is already present when observation starts, one for a disorder that
//! happens later), the law of the disorder time with its hazard, and the
//! volatility and delay-cost schedules. Every spec is produced by
//! [`validate`], which reports all violated invariants at once.
//!
//! The on-disk format is JSON:
//!
//! ```json
//! {
//!   "atoms": [{"b": 0.5, "p0": 0.5, "p1": 0.5}, {"b": 2.0, "p0": 0.5, "p1": 0.5}],
//!   "pi_tilde": 0.1,
//!   "disorder": {"type": "exponential", "rate": 0.2},
//!   "sigma": 1.0,
//!   "cost": {"breaks": [5.0], "values": [1.0, 2.0]}
//! }
//! ```
//!
//! A piecewise-constant hazard is written
//! `{"type": "piecewise", "breaks": [t1, ...], "rates": [r0, r1, ...]}` with
//! one more rate than breakpoints.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of prior weights before renormalization.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// One invariant violated by a raw model description.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("no drift atoms given")]
    EmptyPrior,
    #[error("atom {index} has zero magnitude")]
    ZeroMagnitude { index: usize },
    #[error("atom {index} has a non-finite magnitude")]
    NonFiniteMagnitude { index: usize },
    #[error("magnitude {b} appears more than once")]
    DuplicateAtom { b: f64 },
    #[error("{prior} weight of atom {index} is {weight}, expected a finite value >= 0")]
    NegativeWeight {
        prior: &'static str,
        index: usize,
        weight: f64,
    },
    #[error("{prior} weights sum to {sum}, expected 1")]
    WeightSum { prior: &'static str, sum: f64 },
    #[error("pi_tilde = {value} is outside [0, 1]")]
    AtomMass { value: f64 },
    #[error("volatility value {value} is not strictly positive")]
    NonPositiveSigma { value: f64 },
    #[error("cost value {value} is not strictly positive")]
    NonPositiveCost { value: f64 },
    #[error("bad hazard: {reason}")]
    BadHazard { reason: String },
    #[error("bad {what} breakpoints: {reason}")]
    BadBreakpoints { what: &'static str, reason: String },
}

/// Every violation found while validating a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid model:")?;
        for v in &self.violations {
            write!(f, " [{v}]")?;
        }
        Ok(())
    }
}

/// Errors raised while loading a model file.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse model: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

// ---------------------------------------------------------------------------
// Piecewise-constant helpers shared by schedules and hazards
// ---------------------------------------------------------------------------

/// Index of the piece containing `t`; pieces are `[t_k, t_{k+1})`.
fn piece_index(breaks: &[f64], t: f64) -> usize {
    breaks.partition_point(|&b| b <= t)
}

/// `∫_0^t f(u) du` for a right-continuous step function.
fn piecewise_integral(breaks: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut left = 0.0;
    for (k, &b) in breaks.iter().enumerate() {
        if t <= b {
            return acc + values[k] * (t - left);
        }
        acc += values[k] * (b - left);
        left = b;
    }
    acc + values[breaks.len()] * (t - left)
}

fn check_breaks(breaks: &[f64], n_values: usize) -> Result<(), String> {
    if n_values != breaks.len() + 1 {
        return Err(format!(
            "{} breakpoints need {} values, got {}",
            breaks.len(),
            breaks.len() + 1,
            n_values
        ));
    }
    if breaks.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err("breakpoints must be finite and > 0".into());
    }
    if breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err("breakpoints must be strictly increasing".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

/// Deterministic, strictly positive function of time used for `σ(·)` and `c(·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `values[k]` holds on `[breaks[k-1], breaks[k])`, with `breaks[-1] = 0`.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
}

impl Schedule {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::PiecewiseConstant { breaks, values } => values[piece_index(breaks, t)],
        }
    }

    /// `∫_0^t value(u) du`.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(v) => v * t.max(0.0),
            Schedule::PiecewiseConstant { breaks, values } => piecewise_integral(breaks, values, t),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Schedule::Constant(v) => Some(*v),
            Schedule::PiecewiseConstant { values, .. } => {
                let first = values[0];
                values.iter().all(|v| *v == first).then_some(first)
            }
        }
    }

    /// Pointwise multiple `k·f(t)`.
    pub fn scaled(&self, k: f64) -> Schedule {
        match self {
            Schedule::Constant(v) => Schedule::Constant(v * k),
            Schedule::PiecewiseConstant { breaks, values } => Schedule::PiecewiseConstant {
                breaks: breaks.clone(),
                values: values.iter().map(|v| v * k).collect(),
            },
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Schedule::Constant(v) => std::slice::from_ref(v),
            Schedule::PiecewiseConstant { values, .. } => values,
        }
    }

    fn check(&self, what: &'static str, out: &mut Vec<Violation>, bad: impl Fn(f64) -> Violation) {
        if let Schedule::PiecewiseConstant { breaks, values } = self {
            if let Err(reason) = check_breaks(breaks, values.len()) {
                out.push(Violation::BadBreakpoints { what, reason });
            }
        }
        for &v in self.values() {
            if !(v.is_finite() && v > 0.0) {
                out.push(bad(v));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Disorder law
// ---------------------------------------------------------------------------

/// Law `ν` of the disorder time on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    Exponential { rate: f64 },
    /// `rates[k]` is the hazard on `[breaks[k-1], breaks[k])`.
    PiecewiseConstantHazard { breaks: Vec<f64>, rates: Vec<f64> },
}

/// Disorder time distribution `π̃·δ₀ + (1−π̃)·ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderLaw {
    pub atom_at_zero: f64,
    pub tail: Tail,
}

impl DisorderLaw {
    /// Hazard `λ(t) = F′_ν(t)/(1−F_ν(t))`; at `t = 0` the right limit.
    pub fn hazard(&self, t: f64) -> f64 {
        match &self.tail {
            Tail::Exponential { rate } => *rate,
            Tail::PiecewiseConstantHazard { breaks, rates } => rates[piece_index(breaks, t)],
        }
    }

    /// Integrated hazard `∫_0^t λ(u) du`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        match &self.tail {
            Tail::Exponential { rate } => rate * t.max(0.0),
            Tail::PiecewiseConstantHazard { breaks, rates } => piecewise_integral(breaks, rates, t),
        }
    }

    /// `ν((t, ∞))`.
    pub fn tail_survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// `F_ν(t)`.
    pub fn tail_cdf(&self, t: f64) -> f64 {
        -(-self.cumulative_hazard(t)).exp_m1()
    }

    /// `P(Θ ≤ t) = π̃ + (1−π̃)F_ν(t)`.
    pub fn disorder_cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.atom_at_zero + (1.0 - self.atom_at_zero) * self.tail_cdf(t)
    }

    /// `ν((t1,∞)) / ν((t0,∞))` for `t0 ≤ t1`.
    pub fn step_survival_factor(&self, t0: f64, t1: f64) -> f64 {
        match &self.tail {
            Tail::Exponential { rate } => (-rate * (t1 - t0)).exp(),
            Tail::PiecewiseConstantHazard { .. } => {
                (-(self.cumulative_hazard(t1) - self.cumulative_hazard(t0))).exp()
            }
        }
    }

    /// Inverse of `F_ν`; `u ∈ [0, 1)`.
    pub fn tail_quantile(&self, u: f64) -> f64 {
        // Target integrated hazard.
        let target = -(-u).ln_1p();
        match &self.tail {
            Tail::Exponential { rate } => target / rate,
            Tail::PiecewiseConstantHazard { breaks, rates } => {
                let mut acc = 0.0;
                let mut left = 0.0;
                for (k, &b) in breaks.iter().enumerate() {
                    let piece = rates[k] * (b - left);
                    if acc + piece >= target {
                        return left + (target - acc) / rates[k];
                    }
                    acc += piece;
                    left = b;
                }
                left + (target - acc) / rates[breaks.len()]
            }
        }
    }

    /// Mean of `ν`, i.e. `E[Θ | Θ > 0]`.
    pub fn tail_mean(&self) -> f64 {
        match &self.tail {
            Tail::Exponential { rate } => 1.0 / rate,
            Tail::PiecewiseConstantHazard { breaks, rates } => {
                // ∫ S(t) dt piece by piece.
                let mut mean = 0.0;
                let mut left = 0.0;
                let mut surv = 1.0;
                for (k, &b) in breaks.iter().enumerate() {
                    let r = rates[k];
                    let next = surv * (-r * (b - left)).exp();
                    mean += (surv - next) / r;
                    surv = next;
                    left = b;
                }
                mean + surv / rates[breaks.len()]
            }
        }
    }

    /// The rate if the tail is exponential.
    pub fn constant_rate(&self) -> Option<f64> {
        match &self.tail {
            Tail::Exponential { rate } => Some(*rate),
            Tail::PiecewiseConstantHazard { rates, .. } => {
                let first = rates[0];
                rates.iter().all(|r| *r == first).then_some(first)
            }
        }
    }

    fn check(&self, out: &mut Vec<Violation>) {
        if !(0.0..=1.0).contains(&self.atom_at_zero) {
            out.push(Violation::AtomMass {
                value: self.atom_at_zero,
            });
        }
        let rates: &[f64] = match &self.tail {
            Tail::Exponential { rate } => std::slice::from_ref(rate),
            Tail::PiecewiseConstantHazard { breaks, rates } => {
                if let Err(reason) = check_breaks(breaks, rates.len()) {
                    out.push(Violation::BadHazard { reason });
                }
                rates
            }
        };
        for &r in rates {
            if !(r.is_finite() && r > 0.0) {
                out.push(Violation::BadHazard {
                    reason: format!("rate {r} is not strictly positive"),
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Drift prior
// ---------------------------------------------------------------------------

/// A finitely supported prior over non-zero drift magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPrior {
    magnitudes: Vec<f64>,
    weights: Vec<f64>,
}

impl DriftPrior {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Atom selected by a uniform draw `u ∈ [0, 1)` (inverse CDF in atom order).
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (b, p) in self.magnitudes.iter().zip(&self.weights) {
            acc += p;
            if u < acc {
                return *b;
            }
        }
        // u beyond the rounded total: last atom with positive weight.
        let last = self.weights.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        self.magnitudes[last]
    }
}

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

/// Validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Magnitude prior when the disorder is present at time zero (weights `p̌_i`).
    pub prior0: DriftPrior,
    /// Magnitude prior when the disorder happens later (weights `p_i`).
    pub prior1: DriftPrior,
    pub disorder: DisorderLaw,
    pub sigma: Schedule,
    pub cost: Schedule,
}

/// Constant `σ`, `c` and disorder rate `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCoefficients {
    pub sigma: f64,
    pub cost: f64,
    pub lambda: f64,
}

impl ModelSpec {
    pub fn n(&self) -> usize {
        self.prior1.len()
    }

    pub fn magnitudes(&self) -> &[f64] {
        self.prior1.magnitudes()
    }

    pub fn pi_tilde(&self) -> f64 {
        self.disorder.atom_at_zero
    }

    /// Initial posterior vector `π_i = π̃·p̌_i`.
    pub fn initial_posterior(&self) -> Vec<f64> {
        self.prior0
            .weights()
            .iter()
            .map(|p| self.pi_tilde() * p)
            .collect()
    }

    /// `E[Θ | Θ > 0]`.
    pub fn mean_disorder_time(&self) -> f64 {
        self.disorder.tail_mean()
    }

    /// Default horizon of eight mean disorder times.
    pub fn default_horizon(&self) -> f64 {
        8.0 * self.mean_disorder_time()
    }

    pub fn constant_coefficients(&self) -> Option<ConstantCoefficients> {
        Some(ConstantCoefficients {
            sigma: self.sigma.as_constant()?,
            cost: self.cost.as_constant()?,
            lambda: self.disorder.constant_rate()?,
        })
    }

    /// Smallest and largest `|b_i|` among atoms with positive `μ¹` weight.
    pub fn magnitude_range(&self) -> (f64, f64) {
        self.magnitudes()
            .iter()
            .zip(self.prior1.weights())
            .filter(|(_, p)| **p > 0.0)
            .map(|(b, _)| b.abs())
            .fold((f64::INFINITY, 0.0), |(lo, hi), b| (lo.min(b), hi.max(b)))
    }

    pub fn with_sigma(&self, sigma: Schedule) -> Result<ModelSpec, ValidationError> {
        let mut raw = self.to_raw();
        raw.sigma = RawSchedule::from(&sigma);
        validate(&raw)
    }

    pub fn with_cost(&self, cost: Schedule) -> Result<ModelSpec, ValidationError> {
        let mut raw = self.to_raw();
        raw.cost = RawSchedule::from(&cost);
        validate(&raw)
    }

    pub fn with_disorder(&self, disorder: DisorderLaw) -> Result<ModelSpec, ValidationError> {
        let mut raw = self.to_raw();
        raw.pi_tilde = disorder.atom_at_zero;
        raw.disorder = RawDisorder::from(&disorder.tail);
        validate(&raw)
    }

    pub fn with_pi_tilde(&self, pi_tilde: f64) -> Result<ModelSpec, ValidationError> {
        let mut raw = self.to_raw();
        raw.pi_tilde = pi_tilde;
        validate(&raw)
    }

    /// Prior `μ(·/k)`: every magnitude multiplied by `k`.
    pub fn with_magnitudes_scaled(&self, k: f64) -> Result<ModelSpec, ValidationError> {
        let mut raw = self.to_raw();
        for atom in &mut raw.atoms {
            atom.b *= k;
        }
        validate(&raw)
    }

    pub fn to_raw(&self) -> RawModel {
        RawModel {
            atoms: self
                .magnitudes()
                .iter()
                .zip(self.prior0.weights())
                .zip(self.prior1.weights())
                .map(|((&b, &p0), &p1)| RawAtom { b, p0, p1 })
                .collect(),
            pi_tilde: self.pi_tilde(),
            disorder: RawDisorder::from(&self.disorder.tail),
            sigma: RawSchedule::from(&self.sigma),
            cost: RawSchedule::from(&self.cost),
        }
    }

    pub fn from_json_str(text: &str) -> Result<ModelSpec, ModelError> {
        let raw: RawModel = serde_json::from_str(text)?;
        Ok(validate(&raw)?)
    }

    pub fn from_json_file(path: &Path) -> Result<ModelSpec, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("model serializes")
    }
}

// ---------------------------------------------------------------------------
// Raw (file) representation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAtom {
    pub b: f64,
    pub p0: f64,
    pub p1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawDisorder {
    Exponential { rate: f64 },
    Piecewise { breaks: Vec<f64>, rates: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPiecewise {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawSchedule {
    Constant(f64),
    Piecewise(RawPiecewise),
}

/// Model description as read from a file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub atoms: Vec<RawAtom>,
    pub pi_tilde: f64,
    pub disorder: RawDisorder,
    pub sigma: RawSchedule,
    pub cost: RawSchedule,
}

impl From<&Tail> for RawDisorder {
    fn from(tail: &Tail) -> Self {
        match tail {
            Tail::Exponential { rate } => RawDisorder::Exponential { rate: *rate },
            Tail::PiecewiseConstantHazard { breaks, rates } => RawDisorder::Piecewise {
                breaks: breaks.clone(),
                rates: rates.clone(),
            },
        }
    }
}

impl From<&Schedule> for RawSchedule {
    fn from(s: &Schedule) -> Self {
        match s {
            Schedule::Constant(v) => RawSchedule::Constant(*v),
            Schedule::PiecewiseConstant { breaks, values } => RawSchedule::Piecewise(RawPiecewise {
                breaks: breaks.clone(),
                values: values.clone(),
            }),
        }
    }
}

impl From<&RawSchedule> for Schedule {
    fn from(s: &RawSchedule) -> Self {
        match s {
            RawSchedule::Constant(v) => Schedule::Constant(*v),
            RawSchedule::Piecewise(p) if p.breaks.is_empty() && p.values.len() == 1 => {
                Schedule::Constant(p.values[0])
            }
            RawSchedule::Piecewise(p) => Schedule::PiecewiseConstant {
                breaks: p.breaks.clone(),
                values: p.values.clone(),
            },
        }
    }
}

fn check_weights(
    prior: &'static str,
    weights: &[f64],
    out: &mut Vec<Violation>,
) -> Option<Vec<f64>> {
    let mut ok = true;
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight.is_finite() && weight >= 0.0) {
            out.push(Violation::NegativeWeight {
                prior,
                index,
                weight,
            });
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        out.push(Violation::WeightSum { prior, sum });
        return None;
    }
    if sum == 1.0 {
        Some(weights.to_vec())
    } else {
        Some(weights.iter().map(|w| w / sum).collect())
    }
}

/// Checks every invariant of a raw model and returns the normalized spec.
pub fn validate(raw: &RawModel) -> Result<ModelSpec, ValidationError> {
    let mut violations = Vec::new();

    if raw.atoms.is_empty() {
        violations.push(Violation::EmptyPrior);
    }
    for (index, atom) in raw.atoms.iter().enumerate() {
        if !atom.b.is_finite() {
            violations.push(Violation::NonFiniteMagnitude { index });
        } else if atom.b == 0.0 {
            violations.push(Violation::ZeroMagnitude { index });
        }
    }
    for (i, a) in raw.atoms.iter().enumerate() {
        if raw.atoms[..i].iter().any(|prev| prev.b == a.b) {
            violations.push(Violation::DuplicateAtom { b: a.b });
        }
    }
    let magnitudes: Vec<f64> = raw.atoms.iter().map(|a| a.b).collect();
    let p0: Vec<f64> = raw.atoms.iter().map(|a| a.p0).collect();
    let p1: Vec<f64> = raw.atoms.iter().map(|a| a.p1).collect();
    let w0 = check_weights("p0", &p0, &mut violations);
    let w1 = check_weights("p1", &p1, &mut violations);

    let tail = match &raw.disorder {
        RawDisorder::Exponential { rate } => Tail::Exponential { rate: *rate },
        RawDisorder::Piecewise { breaks, rates } => Tail::PiecewiseConstantHazard {
            breaks: breaks.clone(),
            rates: rates.clone(),
        },
    };
    let disorder = DisorderLaw {
        atom_at_zero: raw.pi_tilde,
        tail,
    };
    disorder.check(&mut violations);

    let sigma = Schedule::from(&raw.sigma);
    sigma.check("sigma", &mut violations, |value| Violation::NonPositiveSigma {
        value,
    });
    let cost = Schedule::from(&raw.cost);
    cost.check("cost", &mut violations, |value| Violation::NonPositiveCost {
        value,
    });

    if !violations.is_empty() {
        return Err(ValidationError { violations });
    }
    let (w0, w1) = (w0.expect("checked"), w1.expect("checked"));
    Ok(ModelSpec {
        prior0: DriftPrior {
            magnitudes: magnitudes.clone(),
            weights: w0,
        },
        prior1: DriftPrior {
            magnitudes,
            weights: w1,
        },
        disorder,
        sigma,
        cost,
    })
}

/// Builder for the common case of constant coefficients and identical priors.
pub fn constant_model(
    atoms: &[(f64, f64)],
    pi_tilde: f64,
    lambda: f64,
    sigma: f64,
    cost: f64,
) -> Result<ModelSpec, ValidationError> {
    validate(&RawModel {
        atoms: atoms
            .iter()
            .map(|&(b, p)| RawAtom { b, p0: p, p1: p })
            .collect(),
        pi_tilde,
        disorder: RawDisorder::Exponential { rate: lambda },
        sigma: RawSchedule::Constant(sigma),
        cost: RawSchedule::Constant(cost),
    })
}
