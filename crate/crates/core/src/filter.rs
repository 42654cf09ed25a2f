//! Posterior of the disorder state given the observation path.
//!
//! Three routes are provided:
//!
//! * [`ExactFilter`] evaluates the Kallianpur–Striebel ratio on the grid. For
//!   each atom it carries the weight of "disorder present at time zero" and
//!   the weight of "disorder in `(0, t]`" (the `θ`-integral), plus the prior
//!   mass of "no disorder yet". The `θ`-integral uses the trapezoidal rule
//!   with the exact `ν`-mass of each grid interval split between its two
//!   endpoints, so one step costs `O(n)`. Weights are renormalized every step
//!   after subtracting the largest log-likelihood increment.
//! * [`SdeFilter`] takes Euler–Maruyama steps of the Kushner–Stratonovich
//!   system driven by the innovation `(dY − X̂ dt)/σ`, then projects the vector
//!   back onto `{π ≥ 0, Σπ ≤ 1}`.
//! * [`ShiryaevFilter`] is the one-dimensional statistic of a one-atom model
//!   `(δ_l, rate λ_l)` run on arbitrary observations, propagated as a
//!   log-odds ratio. With `l` and `λ_l` equal to the truth it coincides with
//!   [`ExactFilter`] for `n = 1`.
//!
//! Exponential tails use the rate convention: density `λ e^{−λθ}`.

use std::io::{self, Write};

use thiserror::Error;

use crate::model::ModelSpec;
use crate::sim::{draw_scenario, IncrementStream, SamplePath, TimeGrid};
use crate::stats::{chunks, log_add_exp, Moments};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("non-finite observation increment at step {step}")]
    Input { step: usize },
    #[error("invalid filter parameters: {0}")]
    Parameters(&'static str),
}

/// Posterior trajectory on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPath {
    pub grid: TimeGrid,
    pub n: usize,
    /// Row-major `(steps + 1) × n` posterior components.
    pub pi: Vec<f64>,
    pub pi_tilde: Vec<f64>,
    pub x_hat: Vec<f64>,
}

impl PosteriorPath {
    fn with_capacity(grid: &TimeGrid, n: usize) -> Self {
        let len = grid.steps() + 1;
        Self {
            grid: *grid,
            n,
            pi: Vec::with_capacity(len * n),
            pi_tilde: Vec::with_capacity(len),
            x_hat: Vec::with_capacity(len),
        }
    }

    fn push(&mut self, pi: impl Iterator<Item = f64>, b: &[f64]) {
        let start = self.pi.len();
        self.pi.extend(pi);
        let row = &self.pi[start..];
        self.pi_tilde.push(row.iter().sum());
        self.x_hat.push(row.iter().zip(b).map(|(p, b)| p * b).sum());
    }

    pub fn len(&self) -> usize {
        self.pi_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_tilde.is_empty()
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.pi[k * self.n..(k + 1) * self.n]
    }

    /// Largest componentwise gap over all grid times.
    pub fn sup_difference(&self, other: &PosteriorPath) -> f64 {
        self.pi
            .iter()
            .zip(&other.pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `t,pi_1..pi_n,pi_tilde,x_hat` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t")?;
        for i in 1..=self.n {
            write!(out, ",pi_{i}")?;
        }
        writeln!(out, ",pi_tilde,x_hat")?;
        for k in 0..self.len() {
            write!(out, "{}", self.grid.time(k))?;
            for p in self.at(k) {
                write!(out, ",{p}")?;
            }
            writeln!(out, ",{},{}", self.pi_tilde[k], self.x_hat[k])?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Exact filter
// ---------------------------------------------------------------------------

/// Streaming Kallianpur–Striebel posterior.
#[derive(Debug, Clone)]
pub struct ExactFilter<'m> {
    model: &'m ModelSpec,
    b: Vec<f64>,
    p1: Vec<f64>,
    /// Normalized weight of "disorder at time zero with magnitude `b_i`".
    at_zero: Vec<f64>,
    /// Normalized weight of "disorder in `(0, t]` with magnitude `b_i`".
    after: Vec<f64>,
    /// Normalized weight of "no disorder by `t`".
    survival: f64,
    ell: Vec<f64>,
    dt: f64,
    k: usize,
    sigma_const: Option<f64>,
    surv_factor_const: Option<f64>,
}

impl<'m> ExactFilter<'m> {
    pub fn new(model: &'m ModelSpec, dt: f64) -> Self {
        let pi_tilde = model.pi_tilde();
        Self {
            model,
            b: model.magnitudes().to_vec(),
            p1: model.prior1.weights().to_vec(),
            at_zero: model.initial_posterior(),
            after: vec![0.0; model.n()],
            survival: 1.0 - pi_tilde,
            ell: vec![0.0; model.n()],
            dt,
            k: 0,
            sigma_const: model.sigma.as_constant(),
            surv_factor_const: model
                .disorder
                .constant_rate()
                .map(|rate| (-rate * dt).exp()),
        }
    }

    /// Advances from `t_k` to `t_{k+1}` with the increment `dY_k`.
    #[inline]
    pub fn step(&mut self, dy: f64) -> Result<(), FilterError> {
        if !dy.is_finite() {
            return Err(FilterError::Input { step: self.k });
        }
        let t0 = self.k as f64 * self.dt;
        let sigma = match self.sigma_const {
            Some(s) => s,
            None => self.model.sigma.value(t0),
        };
        let inv_var = 1.0 / (sigma * sigma);
        let mut shift = 0.0f64;
        for (e, &b) in self.ell.iter_mut().zip(&self.b) {
            *e = b * inv_var * dy - 0.5 * b * b * inv_var * self.dt;
            shift = shift.max(*e);
        }
        let q = match self.surv_factor_const {
            Some(q) => q,
            None => self
                .model
                .disorder
                .step_survival_factor(t0, (self.k + 1) as f64 * self.dt),
        };
        let next_survival = self.survival * q;
        let half_mass = 0.5 * (self.survival - next_survival);
        let base = (-shift).exp();
        let mut total = 0.0;
        for i in 0..self.b.len() {
            let growth = (self.ell[i] - shift).exp();
            let m = self.p1[i] * half_mass;
            self.at_zero[i] *= growth;
            self.after[i] = (self.after[i] + m) * growth + m * base;
            total += self.at_zero[i] + self.after[i];
        }
        self.survival = next_survival * base;
        total += self.survival;
        let inv = 1.0 / total;
        for i in 0..self.b.len() {
            self.at_zero[i] *= inv;
            self.after[i] *= inv;
        }
        self.survival *= inv;
        self.k += 1;
        Ok(())
    }

    pub fn component(&self, i: usize) -> f64 {
        self.at_zero[i] + self.after[i]
    }

    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.b.len()).map(|i| self.component(i))
    }

    /// `Π̃ = Σ_i Π⁽ⁱ⁾`.
    pub fn pi_tilde(&self) -> f64 {
        self.components().sum()
    }

    /// `1 − Π̃`, computed directly from the no-disorder weight.
    pub fn complement(&self) -> f64 {
        self.survival
    }
}

/// Posterior trajectory by the Kallianpur–Striebel formula.
pub fn filter_exact(model: &ModelSpec, path: &SamplePath) -> Result<PosteriorPath, FilterError> {
    let mut out = PosteriorPath::with_capacity(&path.grid, model.n());
    let mut f = ExactFilter::new(model, path.grid.dt());
    out.push(f.components(), model.magnitudes());
    for &dy in &path.dy {
        f.step(dy)?;
        out.push(f.components(), model.magnitudes());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Euler scheme on the filtering SDE
// ---------------------------------------------------------------------------

/// Projection onto `{π ≥ 0, Σπ ≤ 1}` by clamping then rescaling.
pub fn project_onto_simplex(pi: &mut [f64]) {
    for p in pi.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    let s: f64 = pi.iter().sum();
    if s > 1.0 {
        pi.iter_mut().for_each(|p| *p /= s);
    }
}

/// Streaming Euler–Maruyama filter.
#[derive(Debug, Clone)]
pub struct SdeFilter<'m> {
    model: &'m ModelSpec,
    b: Vec<f64>,
    p1: Vec<f64>,
    pi: Vec<f64>,
    dt: f64,
    k: usize,
}

impl<'m> SdeFilter<'m> {
    pub fn new(model: &'m ModelSpec, dt: f64) -> Self {
        Self {
            model,
            b: model.magnitudes().to_vec(),
            p1: model.prior1.weights().to_vec(),
            pi: model.initial_posterior(),
            dt,
            k: 0,
        }
    }

    pub fn step(&mut self, dy: f64) -> Result<(), FilterError> {
        if !dy.is_finite() {
            return Err(FilterError::Input { step: self.k });
        }
        let t0 = self.k as f64 * self.dt;
        let sigma = self.model.sigma.value(t0);
        let lambda = self.model.disorder.hazard(t0);
        let x_hat: f64 = self.pi.iter().zip(&self.b).map(|(p, b)| p * b).sum();
        let tilde: f64 = self.pi.iter().sum();
        let innovation = (dy - x_hat * self.dt) / sigma;
        for i in 0..self.pi.len() {
            let drift = self.p1[i] * lambda * (1.0 - tilde) * self.dt;
            let diffusion = self.pi[i] / sigma * (self.b[i] - x_hat) * innovation;
            self.pi[i] += drift + diffusion;
        }
        project_onto_simplex(&mut self.pi);
        self.k += 1;
        Ok(())
    }

    pub fn posterior(&self) -> &[f64] {
        &self.pi
    }
}

/// Posterior trajectory from the Euler scheme of the Kushner–Stratonovich system.
pub fn filter_sde(model: &ModelSpec, path: &SamplePath) -> Result<PosteriorPath, FilterError> {
    let mut out = PosteriorPath::with_capacity(&path.grid, model.n());
    let mut f = SdeFilter::new(model, path.grid.dt());
    out.push(f.posterior().iter().copied(), model.magnitudes());
    for &dy in &path.dy {
        f.step(dy)?;
        out.push(f.posterior().iter().copied(), model.magnitudes());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// One-dimensional (possibly mismatched) Shiryaev statistic
// ---------------------------------------------------------------------------

/// Streaming statistic `g_l(t, π̃, Y)` in log-odds form.
///
/// With odds `φ = g/(1−g)` the quadrature gives the recursion
/// `φ_{k+1} = e^{λ_l dt}·((φ_k + κ)·e^{ℓ_k} + κ)` where
/// `κ = (1 − e^{−λ_l dt})/2` and `ℓ_k` is the one-step log-likelihood of `l`.
#[derive(Debug, Clone)]
pub struct ShiryaevFilter {
    initial: f64,
    log_odds: f64,
    log_growth: f64,
    log_kappa: f64,
    gain: f64,
    compensator: f64,
    k: usize,
}

impl ShiryaevFilter {
    pub fn new(
        l: f64,
        lambda_l: f64,
        sigma: f64,
        pi_tilde: f64,
        dt: f64,
    ) -> Result<Self, FilterError> {
        if l == 0.0 || !l.is_finite() {
            return Err(FilterError::Parameters("drift l must be finite and non-zero"));
        }
        if !(lambda_l > 0.0 && sigma > 0.0 && dt > 0.0) {
            return Err(FilterError::Parameters("rate, sigma and dt must be positive"));
        }
        if !(0.0..=1.0).contains(&pi_tilde) {
            return Err(FilterError::Parameters("pi_tilde must lie in [0, 1]"));
        }
        let var = sigma * sigma;
        Ok(Self {
            initial: pi_tilde,
            log_odds: pi_tilde.ln() - (1.0 - pi_tilde).ln(),
            log_growth: lambda_l * dt,
            log_kappa: (-0.5 * (-lambda_l * dt).exp_m1()).ln(),
            gain: l / var,
            compensator: 0.5 * l * l / var * dt,
            k: 0,
        })
    }

    #[inline]
    pub fn step(&mut self, dy: f64) -> Result<(), FilterError> {
        if !dy.is_finite() {
            return Err(FilterError::Input { step: self.k });
        }
        let ell = self.gain * dy - self.compensator;
        let inner = ell + log_add_exp(self.log_odds, self.log_kappa);
        self.log_odds = self.log_growth + log_add_exp(inner, self.log_kappa);
        self.k += 1;
        Ok(())
    }

    pub fn value(&self) -> f64 {
        if self.k == 0 {
            self.initial
        } else if self.log_odds >= 0.0 {
            1.0 / (1.0 + (-self.log_odds).exp())
        } else {
            let e = self.log_odds.exp();
            e / (1.0 + e)
        }
    }

    /// `1 − g`.
    pub fn complement(&self) -> f64 {
        if self.k == 0 {
            1.0 - self.initial
        } else if self.log_odds <= 0.0 {
            1.0 / (1.0 + self.log_odds.exp())
        } else {
            let e = (-self.log_odds).exp();
            e / (1.0 + e)
        }
    }
}

/// Trajectory of `g_l` along the observations of `path`.
pub fn shiryaev_filter(
    l: f64,
    lambda_l: f64,
    sigma: f64,
    pi_tilde: f64,
    path: &SamplePath,
) -> Result<Vec<f64>, FilterError> {
    let mut f = ShiryaevFilter::new(l, lambda_l, sigma, pi_tilde, path.grid.dt())?;
    let mut out = Vec::with_capacity(path.dy.len() + 1);
    out.push(f.value());
    for &dy in &path.dy {
        f.step(dy)?;
        out.push(f.value());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tower-property harness
// ---------------------------------------------------------------------------

/// Monte Carlo mean of `Π̃_t` next to `P(Θ ≤ t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerRow {
    /// Grid time actually used.
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub cdf: f64,
}

impl TowerRow {
    pub fn gap(&self) -> f64 {
        (self.mean - self.cdf).abs()
    }
}

/// Averages the exact-filter `Π̃` over `n_paths` at each checkpoint.
pub fn posterior_mean_check(
    model: &ModelSpec,
    n_paths: usize,
    grid: &TimeGrid,
    master_seed: u64,
    checkpoints: &[f64],
) -> Result<Vec<TowerRow>, FilterError> {
    let idx: Vec<usize> = checkpoints.iter().map(|&t| grid.index_of(t)).collect();
    let last = idx.iter().copied().max().unwrap_or(0);
    let per_chunk: Vec<Result<Vec<Moments>, FilterError>> = chunks(n_paths)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![Moments::default(); idx.len()];
            let mut values = vec![0.0; last + 1];
            for p in range {
                let scenario = draw_scenario(model, master_seed, p as u64);
                let mut f = ExactFilter::new(model, grid.dt());
                values[0] = f.pi_tilde();
                let stream = IncrementStream::new(model, scenario, grid, master_seed, p as u64);
                for (k, inc) in stream.take(last).enumerate() {
                    f.step(inc.dy)?;
                    values[k + 1] = f.pi_tilde();
                }
                for (m, &k) in acc.iter_mut().zip(&idx) {
                    m.push(values[k]);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Moments::default(); idx.len()];
    for chunk in per_chunk {
        for (t, c) in total.iter_mut().zip(chunk?) {
            t.merge(&c);
        }
    }
    Ok(idx
        .iter()
        .zip(total)
        .map(|(&k, m)| {
            let t = grid.time(k);
            TowerRow {
                t,
                mean: m.mean,
                std_error: m.std_error(),
                cdf: model.disorder.disorder_cdf(t),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constant_model, validate, RawAtom, RawDisorder, RawModel, RawSchedule};
    use crate::sim::simulate_scenario;

    fn reference_n2() -> ModelSpec {
        constant_model(&[(0.5, 0.5), (2.0, 0.5)], 0.1, 0.2, 1.0, 1.0).unwrap()
    }

    fn in_simplex(path: &PosteriorPath) -> bool {
        (0..path.len()).all(|k| {
            let row = path.at(k);
            row.iter().all(|p| (-1e-12..=1.0 + 1e-12).contains(p))
                && row.iter().sum::<f64>() <= 1.0 + 1e-12
        })
    }

    #[test]
    fn initial_condition() {
        let model = reference_n2();
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let path = simulate_scenario(&model, &grid, 1, 0);
        for post in [filter_exact(&model, &path).unwrap(), filter_sde(&model, &path).unwrap()] {
            assert_eq!(post.at(0), &[0.05, 0.05]);
            assert_eq!(post.len(), grid.steps() + 1);
        }
    }

    #[test]
    fn all_mass_at_zero_stays_at_one() {
        let model = constant_model(&[(0.5, 0.3), (2.0, 0.7)], 1.0, 0.2, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 5.0).unwrap();
        let path = simulate_scenario(&model, &grid, 2, 3);
        let post = filter_exact(&model, &path).unwrap();
        assert!(post.pi_tilde.iter().all(|p| (p - 1.0).abs() < 1e-14));
        let one = constant_model(&[(1.5, 1.0)], 1.0, 0.2, 1.0, 1.0).unwrap();
        let path = simulate_scenario(&one, &grid, 2, 3);
        let post = filter_sde(&one, &path).unwrap();
        assert!(post.pi_tilde.iter().all(|p| *p == 1.0));
    }

    #[test]
    fn no_hazard_no_atom_keeps_sde_at_zero() {
        // λ ≡ 0 is outside the validated family; a vanishing hazard is the
        // limit case and leaves the drift term numerically zero.
        let model = validate(&RawModel {
            atoms: vec![RawAtom {
                b: 1.0,
                p0: 1.0,
                p1: 1.0,
            }],
            pi_tilde: 0.0,
            disorder: RawDisorder::Exponential { rate: 1e-300 },
            sigma: RawSchedule::Constant(1.0),
            cost: RawSchedule::Constant(1.0),
        })
        .unwrap();
        let grid = TimeGrid::new(0.01, 2.0).unwrap();
        let path = simulate_scenario(&model, &grid, 5, 0);
        let post = filter_sde(&model, &path).unwrap();
        assert!(post.pi.iter().all(|p| *p < 1e-290));
    }

    #[test]
    fn no_information_reproduces_prior() {
        // Zero increments carry no likelihood information beyond the
        // compensator; with b → tiny the posterior is the prior law of Θ.
        let model = constant_model(&[(1e-9, 1.0)], 0.2, 0.1, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 10.0).unwrap();
        let mut path = simulate_scenario(&model, &grid, 1, 1);
        path.dy.iter_mut().for_each(|d| *d = 0.0);
        let post = filter_exact(&model, &path).unwrap();
        for k in [0, 100, 1000] {
            let cdf = model.disorder.disorder_cdf(grid.time(k));
            assert!((post.pi_tilde[k] - cdf).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_matches_shiryaev_for_one_atom() {
        let model = constant_model(&[(1.3, 1.0)], 0.15, 0.4, 0.8, 1.0).unwrap();
        let grid = TimeGrid::new(0.005, 20.0).unwrap();
        for i in 0..10 {
            let path = simulate_scenario(&model, &grid, 11, i);
            let exact = filter_exact(&model, &path).unwrap();
            let g = shiryaev_filter(1.3, 0.4, 0.8, 0.15, &path).unwrap();
            let gap = exact
                .pi_tilde
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap < 1e-10, "path {i}: {gap}");
        }
    }

    #[test]
    fn shiryaev_filter_start_and_bounds() {
        let model = constant_model(&[(1.0, 1.0)], 0.0, 0.1, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 200.0).unwrap();
        let path = simulate_scenario(&model, &grid, 3, 0);
        let g = shiryaev_filter(1.0, 0.1, 1.0, 0.35, &path).unwrap();
        assert_eq!(g[0], 0.35);
        assert!(g.iter().all(|v| (0.0..=1.0).contains(v)));
        let mut noise = path.clone();
        noise.dy = path.dw.clone();
        let g = shiryaev_filter(1.0, 0.1, 1.0, 0.0, &noise).unwrap();
        assert_eq!(g[0], 0.0);
        assert!(g.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn shiryaev_filter_monotone_in_observations() {
        use rand::Rng;
        let model = constant_model(&[(1.0, 1.0)], 0.0, 0.2, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 10.0).unwrap();
        let mut rng = crate::sim::stream_rng(99, 0, crate::sim::Stream::Noise);
        for i in 0..100 {
            let path = simulate_scenario(&model, &grid, 4, i);
            let mut up = path.clone();
            for d in up.dy.iter_mut() {
                *d += rng.random::<f64>() * 0.05;
            }
            let lo = shiryaev_filter(0.7, 0.1, 1.0, 0.1, &path).unwrap();
            let hi = shiryaev_filter(0.7, 0.1, 1.0, 0.1, &up).unwrap();
            assert!(lo.iter().zip(&hi).all(|(a, b)| b >= a));
        }
    }

    #[test]
    fn filters_stay_in_simplex() {
        let model = reference_n2();
        let grid = TimeGrid::new(0.01, 20.0).unwrap();
        for i in 0..200 {
            let path = simulate_scenario(&model, &grid, 21, i);
            assert!(in_simplex(&filter_exact(&model, &path).unwrap()));
            assert!(in_simplex(&filter_sde(&model, &path).unwrap()));
        }
    }

    #[test]
    fn nan_input_rejected() {
        let model = reference_n2();
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let mut path = simulate_scenario(&model, &grid, 1, 0);
        path.dy[3] = f64::NAN;
        assert_eq!(
            filter_exact(&model, &path).unwrap_err(),
            FilterError::Input { step: 3 }
        );
        assert!(filter_sde(&model, &path).is_err());
        assert!(shiryaev_filter(1.0, 0.1, 1.0, 0.0, &path).is_err());
    }

    #[test]
    fn no_overflow_on_long_strong_signal() {
        let model = constant_model(&[(5.0, 0.5), (-4.0, 0.5)], 0.5, 0.2, 0.3, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 400.0).unwrap();
        let path = simulate_scenario(&model, &grid, 8, 2);
        let post = filter_exact(&model, &path).unwrap();
        assert!(post.pi.iter().all(|p| p.is_finite()));
        let g = shiryaev_filter(5.0, 0.2, 0.3, 0.5, &path).unwrap();
        assert!(g.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn tower_check_trivial_cases() {
        let model = constant_model(&[(1.0, 1.0)], 1.0, 0.1, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 5.0).unwrap();
        let rows = posterior_mean_check(&model, 50, &grid, 1, &[0.0, 2.0, 5.0]).unwrap();
        for r in rows {
            assert!((r.mean - 1.0).abs() < 1e-14);
            assert_eq!(r.cdf, 1.0);
        }
        let model = constant_model(&[(1.0, 1.0)], 0.2, 0.1, 1.0, 1.0).unwrap();
        let rows = posterior_mean_check(&model, 50, &grid, 1, &[0.0]).unwrap();
        assert_eq!(rows[0].mean, 0.2);
        assert_eq!(rows[0].std_error, 0.0);
    }
}
