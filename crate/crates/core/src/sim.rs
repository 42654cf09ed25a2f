//! Scenario generation on a uniform time grid.
//!
//! Randomness is drawn from ChaCha8 keyed by `(master_seed, path_index)` with
//! one ChaCha stream per quantity: disorder time, magnitude, and Brownian
//! noise. Two models simulated with the same seed and path index therefore
//! share their noise exactly, which is what the common-random-numbers
//! comparisons rely on.
//!
//! Observation increments use `dY_k = B·ov_k + σ(t_k)·dW_k`, where `ov_k` is
//! the length of `[t_k, t_{k+1}]` lying after the disorder time.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time grid: dt = {dt} and horizon = {horizon} do not give an integer number of steps")]
    GridMismatch { dt: f64, horizon: f64 },
    #[error("time grid needs dt > 0 and horizon > 0 (dt = {dt}, horizon = {horizon})")]
    BadGrid { dt: f64, horizon: f64 },
    #[error("coupling needs lambda_l <= lambda (lambda_l = {lambda_l}, lambda = {lambda})")]
    RateOrder { lambda_l: f64, lambda: f64 },
    #[error("coupling needs an exponential disorder tail")]
    NotConstantRate,
    #[error("coupled drift must be non-zero and the rate positive")]
    BadCoupling,
    #[error("cannot coarsen {steps} steps by {factor}")]
    Coarsen { steps: usize, factor: usize },
}

/// Uniform grid `t_k = k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, horizon: f64) -> Result<Self, SimError> {
        if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) {
            return Err(SimError::BadGrid { dt, horizon });
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 {
            return Err(SimError::GridMismatch { dt, horizon });
        }
        Ok(Self {
            dt,
            horizon,
            steps: steps as usize,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Grid index nearest to `t`, clamped to the horizon.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }
}

/// Independent random streams per path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    DisorderTime = 0,
    Magnitude = 1,
    Noise = 2,
}

/// Counter-based generator for one `(seed, path, stream)` triple.
pub fn stream_rng(master_seed: u64, path_index: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&path_index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream as u64);
    rng
}

/// Disorder time and realized magnitude of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    /// Exact disorder time (may exceed the horizon).
    pub theta: f64,
    /// Realized post-change drift.
    pub magnitude: f64,
    /// Whether the disorder was drawn from the atom at zero.
    pub at_zero: bool,
}

impl Scenario {
    /// Part of `[t0, t1]` after the disorder.
    #[inline]
    pub fn overlap(&self, t0: f64, t1: f64) -> f64 {
        if self.at_zero || self.theta <= t0 {
            t1 - t0
        } else if self.theta >= t1 {
            0.0
        } else {
            t1 - self.theta
        }
    }

    /// Signal `X_t = B·1{Θ ≤ t}`.
    pub fn signal(&self, t: f64) -> f64 {
        if self.at_zero || self.theta <= t {
            self.magnitude
        } else {
            0.0
        }
    }
}

/// Draws `(Θ, B)` for a path by inverse CDF.
pub fn draw_scenario(model: &ModelSpec, master_seed: u64, path_index: u64) -> Scenario {
    let mut rng = stream_rng(master_seed, path_index, Stream::DisorderTime);
    let u_atom: f64 = rng.random();
    let u_tail: f64 = rng.random();
    let at_zero = u_atom < model.pi_tilde();
    let theta = if at_zero {
        0.0
    } else {
        model.disorder.tail_quantile(u_tail)
    };
    let u_mag: f64 = stream_rng(master_seed, path_index, Stream::Magnitude).random();
    let prior = if at_zero { &model.prior0 } else { &model.prior1 };
    Scenario {
        theta,
        magnitude: prior.quantile(u_mag),
        at_zero,
    }
}

/// One step of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment {
    pub dw: f64,
    pub dy: f64,
}

/// Lazily generated increments of one path.
pub struct IncrementStream<'a> {
    model: &'a ModelSpec,
    scenario: Scenario,
    noise: ChaCha8Rng,
    dt: f64,
    sqrt_dt: f64,
    constant_sigma: Option<f64>,
    k: usize,
    steps: usize,
}

impl<'a> IncrementStream<'a> {
    pub fn new(
        model: &'a ModelSpec,
        scenario: Scenario,
        grid: &TimeGrid,
        master_seed: u64,
        path_index: u64,
    ) -> Self {
        Self {
            model,
            scenario,
            noise: stream_rng(master_seed, path_index, Stream::Noise),
            dt: grid.dt(),
            sqrt_dt: grid.dt().sqrt(),
            constant_sigma: model.sigma.as_constant(),
            k: 0,
            steps: grid.steps(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}

impl Iterator for IncrementStream<'_> {
    type Item = Increment;

    #[inline]
    fn next(&mut self) -> Option<Increment> {
        if self.k >= self.steps {
            return None;
        }
        let t0 = self.k as f64 * self.dt;
        let t1 = (self.k + 1) as f64 * self.dt;
        let z: f64 = StandardNormal.sample(&mut self.noise);
        let dw = self.sqrt_dt * z;
        let sigma = match self.constant_sigma {
            Some(s) => s,
            None => self.model.sigma.value(t0),
        };
        let overlap = if self.scenario.at_zero || self.scenario.theta <= t0 {
            self.dt
        } else {
            self.scenario.overlap(t0, t1)
        };
        let dy = self.scenario.magnitude * overlap + sigma * dw;
        self.k += 1;
        Some(Increment { dw, dy })
    }
}

/// A complete simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub scenario: Scenario,
    pub dw: Vec<f64>,
    pub dy: Vec<f64>,
    pub grid: TimeGrid,
    pub path_index: u64,
}

impl SamplePath {
    pub fn theta(&self) -> f64 {
        self.scenario.theta
    }

    pub fn magnitude(&self) -> f64 {
        self.scenario.magnitude
    }

    /// Sums groups of `factor` consecutive increments onto a grid `factor`
    /// times coarser. The Brownian path is unchanged.
    pub fn coarsen(&self, factor: usize) -> Result<SamplePath, SimError> {
        let steps = self.grid.steps();
        if factor == 0 || steps % factor != 0 {
            return Err(SimError::Coarsen { steps, factor });
        }
        let grid = TimeGrid::new(self.grid.dt() * factor as f64, self.grid.horizon())?;
        let sum = |v: &[f64]| v.chunks(factor).map(|c| c.iter().sum()).collect::<Vec<f64>>();
        Ok(SamplePath {
            scenario: self.scenario,
            dw: sum(&self.dw),
            dy: sum(&self.dy),
            grid,
            path_index: self.path_index,
        })
    }

    /// Writes `t,dW,dY,X` rows, one per step (signal at the left endpoint).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,dW,dY,X")?;
        for k in 0..self.grid.steps() {
            let t = self.grid.time(k);
            writeln!(
                out,
                "{},{},{},{}",
                t,
                self.dw[k],
                self.dy[k],
                self.scenario.signal(t)
            )?;
        }
        Ok(())
    }
}

fn collect_path(
    model: &ModelSpec,
    scenario: Scenario,
    grid: &TimeGrid,
    master_seed: u64,
    path_index: u64,
) -> SamplePath {
    let (dw, dy) = IncrementStream::new(model, scenario, grid, master_seed, path_index)
        .map(|inc| (inc.dw, inc.dy))
        .unzip();
    SamplePath {
        scenario,
        dw,
        dy,
        grid: *grid,
        path_index,
    }
}

/// Simulates the scenario fully determined by `(master_seed, path_index)`.
pub fn simulate_scenario(
    model: &ModelSpec,
    grid: &TimeGrid,
    master_seed: u64,
    path_index: u64,
) -> SamplePath {
    let scenario = draw_scenario(model, master_seed, path_index);
    collect_path(model, scenario, grid, master_seed, path_index)
}

/// Path of the true model `(μ, Θ)` together with the path of the one-atom
/// model `(δ_l, Θ_l)` driven by the same noise, where `Θ_l = Θ·λ/λ_l ≥ Θ`.
pub fn coupled_scenarios(
    model: &ModelSpec,
    l: f64,
    lambda_l: f64,
    grid: &TimeGrid,
    master_seed: u64,
    path_index: u64,
) -> Result<(SamplePath, SamplePath), SimError> {
    let lambda = match model.disorder.tail {
        crate::model::Tail::Exponential { rate } => rate,
        _ => return Err(SimError::NotConstantRate),
    };
    if l == 0.0 || !l.is_finite() || !(lambda_l > 0.0) {
        return Err(SimError::BadCoupling);
    }
    if lambda_l > lambda {
        return Err(SimError::RateOrder { lambda_l, lambda });
    }
    let scenario = draw_scenario(model, master_seed, path_index);
    let theta_l = if scenario.at_zero {
        0.0
    } else {
        scenario.theta * (lambda / lambda_l)
    };
    let coupled = Scenario {
        theta: theta_l,
        magnitude: l,
        at_zero: scenario.at_zero,
    };
    Ok((
        collect_path(model, scenario, grid, master_seed, path_index),
        collect_path(model, coupled, grid, master_seed, path_index),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::constant_model;

    #[test]
    fn grid_rules() {
        let g = TimeGrid::new(0.01, 1.0).unwrap();
        assert_eq!(g.steps(), 100);
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0).is_err());
        assert!(TimeGrid::new(2.0, 1.0).is_err());
    }

    #[test]
    fn atom_at_zero_forces_branch() {
        let model = constant_model(&[(2.0, 1.0)], 1.0, 0.1, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 2.0).unwrap();
        for i in 0..20 {
            let p = simulate_scenario(&model, &grid, 7, i);
            assert_eq!(p.theta(), 0.0);
            assert_eq!(p.magnitude(), 2.0);
            for k in 0..grid.steps() {
                assert_eq!(p.dy[k], 2.0 * 0.01 + p.dw[k]);
            }
        }
    }

    #[test]
    fn same_seed_same_path() {
        let model = constant_model(&[(0.5, 0.5), (2.0, 0.5)], 0.1, 0.2, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 5.0).unwrap();
        assert_eq!(
            simulate_scenario(&model, &grid, 3, 11),
            simulate_scenario(&model, &grid, 3, 11)
        );
        assert_ne!(
            simulate_scenario(&model, &grid, 3, 11).dw,
            simulate_scenario(&model, &grid, 3, 12).dw
        );
    }

    #[test]
    fn fractional_overlap_at_disorder() {
        let s = Scenario {
            theta: 0.25,
            magnitude: 1.0,
            at_zero: false,
        };
        assert_eq!(s.overlap(0.0, 0.1), 0.0);
        assert!((s.overlap(0.2, 0.3) - 0.05).abs() < 1e-15);
        assert_eq!(s.overlap(0.3, 0.4), 0.4 - 0.3);
    }

    #[test]
    fn coupling_rules() {
        let model = constant_model(&[(0.5, 0.5), (2.0, 0.5)], 0.3, 0.2, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 4.0).unwrap();
        assert!(matches!(
            coupled_scenarios(&model, 0.5, 0.3, &grid, 1, 0),
            Err(SimError::RateOrder { .. })
        ));
        for i in 0..50 {
            let (mu, dl) = coupled_scenarios(&model, 0.5, 0.2, &grid, 1, i).unwrap();
            assert_eq!(mu.theta(), dl.theta());
            assert_eq!(mu.dw, dl.dw);
            let (mu, dl) = coupled_scenarios(&model, 0.5, 0.1, &grid, 1, i).unwrap();
            assert!(dl.theta() >= mu.theta());
            for k in 0..grid.steps() {
                assert!(dl.dy[k] <= mu.dy[k]);
            }
            if mu.scenario.at_zero && mu.magnitude() == 0.5 {
                assert_eq!(mu.dy, dl.dy);
            }
        }
    }

    #[test]
    fn coarsening_preserves_totals() {
        let model = constant_model(&[(1.0, 1.0)], 0.0, 0.5, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0025, 2.0).unwrap();
        let fine = simulate_scenario(&model, &grid, 9, 4);
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.grid.steps(), 200);
        let tot_f: f64 = fine.dy.iter().sum();
        let tot_c: f64 = coarse.dy.iter().sum();
        assert!((tot_f - tot_c).abs() < 1e-12);
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn csv_dump_has_one_row_per_step() {
        let model = constant_model(&[(1.0, 1.0)], 0.5, 0.5, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let p = simulate_scenario(&model, &grid, 1, 1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("t,dW,dY,X\n0,"));
    }
}
