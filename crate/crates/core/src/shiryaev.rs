//! Classical Shiryaev problem with constant drift `b`, volatility `σ`,
//! disorder rate `λ` and delay cost `c`.
//!
//! With `ρ = b²/(2σ²)` the value `U` solves
//! `ρπ²(1−π)²U″ + λ(1−π)U′ + cπ = 0` on `(0, a)`, `U = 1−π` on `[a, 1]`,
//! `U′(a) = −1`. The equation is first order in `g = U′`; the solution
//! bounded at zero is
//!
//! `g(π) = −(c/ρ)·∫_0^π exp(Λ(ψ(s) − ψ(π))) / (s(1−s)²) ds`,
//!
//! with `Λ = λ/ρ` and `ψ(π) = ln(π/(1−π)) − 1/π`. The integral is taken in
//! the variable `x = ln s` from `s₀ = 1e−12`, where the integrand is below
//! `exp(−Λ·10¹²)`. The threshold is the root of `g(a) = −1`.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::ConstantCoefficients;
use crate::quadrature::{gk15, integrate};

pub const LOWER_CUTOFF: f64 = 1e-12;
pub const ROOT_TOLERANCE: f64 = 1e-10;
pub const QUAD_TOLERANCE: f64 = 1e-13;
pub const TABLE_POINTS: usize = 2001;
/// Upper end of the bracket for the root.
pub const UPPER_EPS: f64 = 1e-8;
const MAX_PANELS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShiryaevError {
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error("no sign change of g + 1 on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
}

/// Constant coefficients of the one-atom problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalParams {
    pub b: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub c: f64,
}

impl ClassicalParams {
    pub fn new(b: f64, sigma: f64, lambda: f64, c: f64) -> Result<Self, ShiryaevError> {
        if !(b.is_finite() && b != 0.0) {
            return Err(ShiryaevError::Params("b must be finite and non-zero"));
        }
        for (v, msg) in [
            (sigma, "sigma must be positive"),
            (lambda, "lambda must be positive"),
            (c, "c must be positive"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ShiryaevError::Params(msg));
            }
        }
        Ok(Self {
            b,
            sigma,
            lambda,
            c,
        })
    }

    /// One-atom problem with drift `b` and the model's constant coefficients.
    pub fn from_coefficients(b: f64, k: &ConstantCoefficients) -> Result<Self, ShiryaevError> {
        Self::new(b, k.sigma, k.lambda, k.cost)
    }

    /// Signal-to-noise rate `ρ = b²/(2σ²)`.
    pub fn rho(&self) -> f64 {
        self.b * self.b / (2.0 * self.sigma * self.sigma)
    }

    /// Lower bound `λ/(λ+c)` of the threshold.
    pub fn threshold_floor(&self) -> f64 {
        self.lambda / (self.lambda + self.c)
    }

    fn big_lambda(&self) -> f64 {
        self.lambda / self.rho()
    }
}

fn psi(p: f64) -> f64 {
    p.ln() - (-p).ln_1p() - 1.0 / p
}

/// `g(π) = U′(π)` of the continuation-region solution, for `π ∈ (0, 1)`.
pub fn derivative(params: &ClassicalParams, pi: f64) -> f64 {
    if pi <= LOWER_CUTOFF {
        return 0.0;
    }
    let lam = params.big_lambda();
    let psi_pi = psi(pi);
    // s = e^x, ds/s = dx.
    let integrand = |x: f64| {
        let s = x.exp();
        let q = 1.0 - s;
        (lam * (psi(s) - psi_pi)).exp() / (q * q)
    };
    let r = integrate(
        integrand,
        LOWER_CUTOFF.ln(),
        pi.ln(),
        0.0,
        QUAD_TOLERANCE,
        MAX_PANELS,
    );
    -(params.c / params.rho()) * r.value
}

/// Root of `g(a) = −1` by bisection on `[λ/(λ+c), 1 − 1e−8]`.
pub fn shiryaev_threshold(params: &ClassicalParams) -> Result<f64, ShiryaevError> {
    let mut lo = params.threshold_floor();
    let mut hi = 1.0 - UPPER_EPS;
    if !(derivative(params, lo) > -1.0 && derivative(params, hi) < -1.0) {
        return Err(ShiryaevError::NoBracket { lo, hi });
    }
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if derivative(params, mid) > -1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `∫_lo^hi g`, panel by panel.
fn integrate_derivative(params: &ClassicalParams, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let panels = ((hi - lo) / 5e-4).ceil().max(1.0) as usize;
    let w = (hi - lo) / panels as f64;
    (0..panels)
        .map(|j| {
            let a = lo + j as f64 * w;
            let b = if j + 1 == panels { hi } else { a + w };
            gk15(&|p: f64| derivative(params, p), a, b).0
        })
        .sum()
}

/// `U(π)` without tabulation: `1−a − ∫_π^a g` below `a`, `1−π` above.
pub fn shiryaev_value(pi: f64, params: &ClassicalParams) -> Result<f64, ShiryaevError> {
    let a = shiryaev_threshold(params)?;
    Ok(value_given_threshold(params, a, pi))
}

fn value_given_threshold(params: &ClassicalParams, a: f64, pi: f64) -> f64 {
    if pi >= a {
        1.0 - pi
    } else {
        1.0 - a - integrate_derivative(params, pi.max(0.0), a)
    }
}

/// Threshold plus `U` and `U′` tabulated on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiryaevSolution {
    pub params: ClassicalParams,
    pub threshold: f64,
    pub pi: Vec<f64>,
    pub value: Vec<f64>,
    pub derivative: Vec<f64>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub root: f64,
    pub quadrature_rel: f64,
    pub lower_cutoff: f64,
    pub table_points: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: ROOT_TOLERANCE,
            quadrature_rel: QUAD_TOLERANCE,
            lower_cutoff: LOWER_CUTOFF,
            table_points: TABLE_POINTS,
        }
    }
}

/// Solves for `a` and tabulates `U`, `U′` on `TABLE_POINTS` points.
pub fn solve(params: &ClassicalParams) -> Result<ShiryaevSolution, ShiryaevError> {
    let a = shiryaev_threshold(params)?;
    let m = TABLE_POINTS - 1;
    let pi: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let derivative_table: Vec<f64> = pi
        .iter()
        .map(|&p| if p >= a { -1.0 } else { derivative(params, p) })
        .collect();
    // Integrate g backwards from a, node to node.
    let mut value = vec![0.0; pi.len()];
    let mut acc = 1.0 - a;
    let mut upper = a;
    for j in (0..pi.len()).rev() {
        if pi[j] >= a {
            value[j] = 1.0 - pi[j];
        } else {
            acc -= gk15(&|p: f64| derivative(params, p), pi[j], upper).0;
            upper = pi[j];
            value[j] = acc;
        }
    }
    Ok(ShiryaevSolution {
        params: *params,
        threshold: a,
        pi,
        value,
        derivative: derivative_table,
        tolerances: Tolerances::default(),
    })
}

impl ShiryaevSolution {
    fn spacing(&self) -> f64 {
        1.0 / (self.pi.len() - 1) as f64
    }

    /// Linear interpolation of the table.
    pub fn value_interp(&self, pi: f64) -> f64 {
        let pi = pi.clamp(0.0, 1.0);
        let x = pi / self.spacing();
        let j = (x.floor() as usize).min(self.pi.len() - 2);
        let w = x - j as f64;
        (1.0 - w) * self.value[j] + w * self.value[j + 1]
    }

    /// `U(π)` to quadrature accuracy: nearest table node above plus the
    /// integral of `g` across the gap.
    pub fn value_at(&self, pi: f64) -> f64 {
        let pi = pi.clamp(0.0, 1.0);
        let a = self.threshold;
        if pi >= a {
            return 1.0 - pi;
        }
        let j = ((pi / self.spacing()).ceil() as usize).min(self.pi.len() - 1);
        let (node, base) = if self.pi[j] >= a {
            (a, 1.0 - a)
        } else {
            (self.pi[j], self.value[j])
        };
        base - gk15(&|p: f64| derivative(&self.params, p), pi, node).0
    }

    /// `U′(π)`, `−1` on the stopping region.
    pub fn derivative_at(&self, pi: f64) -> f64 {
        if pi >= self.threshold {
            -1.0
        } else {
            derivative(&self.params, pi)
        }
    }

    /// `λ(1−π)U′ + ρπ²(1−π)²U″ + cπ` with `U′ = g` and `U″` a central
    /// difference of `g` whose stencil stays on one side of `a`.
    pub fn variational_residual(&self, pi: f64) -> f64 {
        let p = &self.params;
        let a = self.threshold;
        if pi > a {
            return -p.lambda * (1.0 - pi) + p.c * pi;
        }
        let delta = 1e-4f64.min(0.5 * (a - pi)).min(0.5 * pi);
        let g = derivative(p, pi);
        let g2 = (derivative(p, pi + delta) - derivative(p, pi - delta)) / (2.0 * delta);
        let q = pi * (1.0 - pi);
        p.lambda * (1.0 - pi) * g + p.rho() * q * q * g2 + p.c * pi
    }

    /// `pi,U,U_prime` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "pi,U,U_prime")?;
        for j in 0..self.pi.len() {
            writeln!(out, "{},{},{}", self.pi[j], self.value[j], self.derivative[j])?;
        }
        Ok(())
    }

    /// Threshold, parameters and tolerances.
    pub fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "threshold": self.threshold,
            "params": self.params,
            "rho": self.params.rho(),
            "tolerances": self.tolerances,
        })
    }
}
