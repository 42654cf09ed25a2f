//! Value iteration for the stationary stopping problem on `Dⁿ`, `n ≤ 2`.
//!
//! `V_{m+1}(π) = min(1 − Σπ, c·Σπ·dt + E[V_m(proj(π + Δπ))])` with `Δπ` one
//! Euler step of the filtering equation driven by a single Gaussian
//! increment, the expectation taken by 7-point Gauss–Hermite quadrature and
//! `V_m` interpolated linearly on the grid (on triangles when `n = 2`). The
//! interpolation weights of every node are computed once, so a sweep is a
//! sparse matrix-vector product. Sweeps are Jacobi: `V_{m+1}` is computed
//! from an immutable `V_m`.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::filter::project_onto_simplex;
use crate::model::ModelSpec;
use crate::quadrature::standard_normal_rule;
use crate::sim::{stream_rng, Stream};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("no convergence after {iterations} sweeps (sup change {sup_change:.3e})")]
    NoConvergence { iterations: usize, sup_change: f64 },
    #[error("value increased at node {node} in sweep {iteration}")]
    NotMonotone { iteration: usize, node: usize },
    #[error("stopping boundary is empty")]
    EmptyBoundary,
}

/// Constant coefficients of the stopping problem. Atoms may repeat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpParams {
    pub b: Vec<f64>,
    /// Weights `p_i` of the post-zero magnitude prior.
    pub p: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub c: f64,
}

impl DpParams {
    pub fn new(b: Vec<f64>, p: Vec<f64>, sigma: f64, lambda: f64, c: f64) -> Result<Self, DpError> {
        let bad = |m: &str| Err(DpError::Params(m.to_string()));
        if b.is_empty() || b.len() > 2 || b.len() != p.len() {
            return bad("need one or two atoms with matching weights");
        }
        if b.iter().any(|x| *x == 0.0 || !x.is_finite()) {
            return bad("magnitudes must be finite and non-zero");
        }
        if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("weights must be non-negative and sum to one");
        }
        for (v, name) in [(sigma, "sigma"), (lambda, "lambda"), (c, "c")] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        Ok(Self {
            b,
            p,
            sigma,
            lambda,
            c,
        })
    }

    pub fn from_model(model: &ModelSpec) -> Result<Self, DpError> {
        let k = model
            .constant_coefficients()
            .ok_or_else(|| DpError::Params("constant sigma, cost and rate required".into()))?;
        Self::new(
            model.magnitudes().to_vec(),
            model.prior1.weights().to_vec(),
            k.sigma,
            k.lambda,
            k.cost,
        )
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }
}

/// Nodes of `Dⁿ` with coordinates on multiples of `h = 1/m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexGrid {
    pub n: usize,
    pub m: usize,
    /// Index of the first node of row `i` (`n = 2`).
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl SimplexGrid {
    pub fn new(n: usize, h: f64) -> Result<Self, DpError> {
        if !(n == 1 || n == 2) {
            return Err(DpError::Params(format!("n = {n}: only n <= 2 is supported")));
        }
        let m = (1.0 / h).round();
        if !(h > 0.0 && m >= 2.0 && (m * h - 1.0).abs() < 1e-9) {
            return Err(DpError::Params(format!("1/h must be an integer >= 2 (h = {h})")));
        }
        let m = m as usize;
        let mut offsets = Vec::new();
        if n == 2 {
            let mut o = 0;
            for i in 0..=m {
                offsets.push(o);
                o += m - i + 1;
            }
        }
        Ok(Self { n, m, offsets })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn len(&self) -> usize {
        match self.n {
            1 => self.m + 1,
            _ => (self.m + 1) * (self.m + 2) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of node `(i, j)`; `j` is ignored for `n = 1`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.n {
            1 => i,
            _ => self.offsets[i] + j,
        }
    }

    /// Integer coordinates of all nodes in index order.
    pub fn coords(&self) -> Vec<(usize, usize)> {
        match self.n {
            1 => (0..=self.m).map(|i| (i, 0)).collect(),
            _ => (0..=self.m)
                .flat_map(|i| (0..=self.m - i).map(move |j| (i, j)))
                .collect(),
        }
    }

    pub fn point(&self, (i, j): (usize, usize)) -> Vec<f64> {
        let h = self.h();
        match self.n {
            1 => vec![i as f64 * h],
            _ => vec![i as f64 * h, j as f64 * h],
        }
    }

    /// Linear interpolation weights at a point of `Dⁿ` (at most 3 entries).
    pub fn weights(&self, pi: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        let m = self.m as f64;
        if self.n == 1 {
            let u = (pi[0] * m).clamp(0.0, m);
            let i = (u.floor() as usize).min(self.m - 1);
            let f = u - i as f64;
            out.push((i, 1.0 - f));
            out.push((i + 1, f));
            return;
        }
        let mut u = (pi[0] * m).max(0.0);
        let mut v = (pi[1] * m).max(0.0);
        if u + v > m {
            let s = m / (u + v);
            u *= s;
            v *= s;
        }
        let i = u.floor() as usize;
        let j = v.floor() as usize;
        let (fu, fv) = (u - i as f64, v - j as f64);
        if i + j >= self.m || (i + j + 1 == self.m && fu + fv > 1.0) {
            // On the face Σπ = 1: interpolate along the edge.
            let i = (u.floor() as usize).min(self.m - 1);
            let f = (u - i as f64).clamp(0.0, 1.0);
            out.push((self.index(i, self.m - i), 1.0 - f));
            out.push((self.index(i + 1, self.m - i - 1), f));
            return;
        }
        if fu + fv <= 1.0 {
            out.push((self.index(i, j), 1.0 - fu - fv));
            out.push((self.index(i + 1, j), fu));
            out.push((self.index(i, j + 1), fv));
        } else {
            out.push((self.index(i + 1, j), 1.0 - fv));
            out.push((self.index(i, j + 1), 1.0 - fu));
            out.push((self.index(i + 1, j + 1), fu + fv - 1.0));
        }
    }
}

/// Discretization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DpSettings {
    pub h: f64,
    pub dt: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl DpSettings {
    pub fn new(h: f64, dt: f64) -> Self {
        Self {
            h,
            dt,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    /// `h = 1/2000` for one atom, `1/400` for two; `dt = 1e−3`.
    pub fn default_for(n: usize) -> Self {
        Self::new(if n == 1 { 1.0 / 2000.0 } else { 1.0 / 400.0 }, 1e-3)
    }
}

/// Converged value function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DPSolution {
    pub params: DpParams,
    pub settings: DpSettings,
    pub grid: SimplexGrid,
    pub value: Vec<f64>,
    pub stop_mask: Vec<bool>,
    pub iterations: usize,
    pub sup_change: f64,
}

/// Sparse transition row of one node.
struct Row {
    running: f64,
    entries: Vec<(u32, f64)>,
}

fn build_rows(params: &DpParams, grid: &SimplexGrid, dt: f64) -> Vec<Option<Row>> {
    let rule = standard_normal_rule();
    let sqrt_dt = dt.sqrt();
    grid.coords()
        .par_iter()
        .map(|&ij| {
            let pi = grid.point(ij);
            let total: f64 = pi.iter().sum();
            if ij.0 + ij.1 == grid.m && grid.n == 2 || grid.n == 1 && ij.0 == grid.m {
                return None;
            }
            let x_hat: f64 = pi.iter().zip(&params.b).map(|(p, b)| p * b).sum();
            let mut entries: Vec<(u32, f64)> = Vec::with_capacity(21);
            let mut next = vec![0.0; grid.n];
            let mut w = Vec::with_capacity(3);
            for &(z, q) in &rule {
                for i in 0..grid.n {
                    next[i] = pi[i]
                        + params.p[i] * params.lambda * (1.0 - total) * dt
                        + pi[i] / params.sigma * (params.b[i] - x_hat) * sqrt_dt * z;
                }
                project_onto_simplex(&mut next);
                grid.weights(&next, &mut w);
                for &(idx, wt) in &w {
                    if wt != 0.0 {
                        entries.push((idx as u32, q * wt));
                    }
                }
            }
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
            for (idx, wt) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == idx => last.1 += wt,
                    _ => merged.push((idx, wt)),
                }
            }
            Some(Row {
                running: params.c * total * dt,
                entries: merged,
            })
        })
        .collect()
}

/// Value iteration from `V_0 = 1 − Σπ`.
pub fn solve_dp(params: &DpParams, settings: &DpSettings) -> Result<DPSolution, DpError> {
    if !(settings.dt > 0.0 && settings.dt.is_finite()) {
        return Err(DpError::Params("dt must be positive".into()));
    }
    let grid = SimplexGrid::new(params.n(), settings.h)?;
    let rows = build_rows(params, &grid, settings.dt);
    let stop: Vec<f64> = grid
        .coords()
        .iter()
        .map(|&ij| (1.0 - grid.point(ij).iter().sum::<f64>()).max(0.0))
        .collect();
    let mut value = stop.clone();
    let mut next = vec![0.0; value.len()];
    let mut sup_change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        let old = &value;
        let sweep: Vec<(f64, usize)> = next
            .par_chunks_mut(4096)
            .enumerate()
            .map(|(c, out)| {
                let mut sup = 0.0f64;
                let mut bad = usize::MAX;
                for (k, slot) in out.iter_mut().enumerate() {
                    let node = c * 4096 + k;
                    let v = match &rows[node] {
                        None => 0.0,
                        Some(row) => {
                            let mut cont = row.running;
                            for &(idx, w) in &row.entries {
                                cont += w * old[idx as usize];
                            }
                            cont.min(stop[node])
                        }
                    };
                    if v > old[node] && bad == usize::MAX {
                        bad = node;
                    }
                    sup = sup.max(old[node] - v);
                    *slot = v;
                }
                (sup, bad)
            })
            .collect();
        std::mem::swap(&mut value, &mut next);
        sup_change = sweep.iter().map(|s| s.0).fold(0.0, f64::max);
        if let Some(&(_, node)) = sweep.iter().find(|s| s.1 != usize::MAX) {
            return Err(DpError::NotMonotone {
                iteration: iterations,
                node,
            });
        }
        if sup_change < settings.tolerance {
            let stop_mask = value.iter().zip(&stop).map(|(v, s)| v >= s).collect();
            return Ok(DPSolution {
                params: params.clone(),
                settings: *settings,
                grid,
                value,
                stop_mask,
                iterations,
                sup_change,
            });
        }
    }
    Err(DpError::NoConvergence {
        iterations,
        sup_change,
    })
}

/// Boundary node with its coordinates and `‖π‖₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryNode {
    pub pi: Vec<f64>,
    pub norm: f64,
}

impl DPSolution {
    /// Interpolated value at a point of `Dⁿ`.
    pub fn value_at(&self, pi: &[f64]) -> f64 {
        let mut p = pi.to_vec();
        project_onto_simplex(&mut p);
        let mut w = Vec::with_capacity(3);
        self.grid.weights(&p, &mut w);
        w.iter().map(|(i, wt)| wt * self.value[*i]).sum()
    }

    /// Smallest `‖π‖₁` among stop nodes.
    pub fn stop_onset(&self) -> f64 {
        self.grid
            .coords()
            .iter()
            .zip(&self.stop_mask)
            .filter(|(_, s)| **s)
            .map(|(&ij, _)| self.grid.point(ij).iter().sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// `pi_1[,pi_2],value,stop` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        if self.grid.n == 1 {
            writeln!(out, "pi_1,value,stop")?;
        } else {
            writeln!(out, "pi_1,pi_2,value,stop")?;
        }
        for (k, ij) in self.grid.coords().into_iter().enumerate() {
            for x in self.grid.point(ij) {
                write!(out, "{x},")?;
            }
            writeln!(out, "{},{}", self.value[k], self.stop_mask[k] as u8)?;
        }
        Ok(())
    }
}

/// Continuation nodes with a stop node among their axis neighbours.
pub fn extract_boundary(solution: &DPSolution) -> Result<Vec<BoundaryNode>, DpError> {
    let g = &solution.grid;
    let m = g.m as isize;
    let in_grid = |i: isize, j: isize| {
        i >= 0 && j >= 0 && if g.n == 1 { i <= m && j == 0 } else { i + j <= m }
    };
    let mut out = Vec::new();
    for (k, (i, j)) in g.coords().into_iter().enumerate() {
        if solution.stop_mask[k] {
            continue;
        }
        let (i, j) = (i as isize, j as isize);
        let adjacent = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(di, dj)| {
            let (a, b) = (i + di, j + dj);
            in_grid(a, b) && solution.stop_mask[g.index(a as usize, b as usize)]
        });
        if adjacent {
            let pi = g.point((i as usize, j as usize));
            let norm = pi.iter().sum();
            out.push(BoundaryNode { pi, norm });
        }
    }
    if out.is_empty() {
        return Err(DpError::EmptyBoundary);
    }
    Ok(out)
}

/// Writes boundary nodes as `pi_1[,pi_2],norm` rows.
pub fn write_boundary_csv<W: Write>(nodes: &[BoundaryNode], mut out: W) -> io::Result<()> {
    let n = nodes.first().map_or(1, |b| b.pi.len());
    let header: Vec<String> = (1..=n).map(|i| format!("pi_{i}")).collect();
    writeln!(out, "{},norm", header.join(","))?;
    for b in nodes {
        for x in &b.pi {
            write!(out, "{x},")?;
        }
        writeln!(out, "{}", b.norm)?;
    }
    Ok(())
}

/// Uniform point of `Dⁿ`.
fn random_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![rng.random::<f64>()];
    }
    // Uniform on the triangle {x, y ≥ 0, x + y ≤ 1} by reflection.
    let (x, y): (f64, f64) = (rng.random(), rng.random());
    if x + y > 1.0 {
        vec![1.0 - x, 1.0 - y]
    } else {
        vec![x, y]
    }
}

/// Largest positive second difference of the interpolated value along
/// `n_segments` random segments of `Dⁿ`, 11 points each.
pub fn concavity_check(solution: &DPSolution, n_segments: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0, Stream::Noise);
    let n = solution.grid.n;
    let mut worst = 0.0f64;
    for _ in 0..n_segments {
        let a = random_point(&mut rng, n);
        let b = random_point(&mut rng, n);
        worst = worst.max(segment_second_difference(solution, &a, &b));
    }
    worst
}

/// Largest positive second difference along `[a, b]`, 11 points.
pub fn segment_second_difference(solution: &DPSolution, a: &[f64], b: &[f64]) -> f64 {
    let vals: Vec<f64> = (0..=10)
        .map(|k| {
            let t = k as f64 / 10.0;
            let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
            solution.value_at(&p)
        })
        .collect();
    vals.windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(0.0, f64::max)
}
