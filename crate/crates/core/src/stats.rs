//! Accumulators with a fixed combination order.
//!
//! Monte Carlo loops split paths into fixed-size chunks, accumulate each
//! chunk sequentially, and merge chunk results left to right. The result is
//! therefore the same whatever the number of worker threads.

use serde::Serialize;

/// Paths per deterministic accumulation chunk.
pub const CHUNK: usize = 512;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

/// Multiplier of the combined standard error in inequality checks.
pub const Z_CHECK: f64 = 3.0;

/// Allowance for grid monitoring when a Monte Carlo estimate is compared
/// from below against an exact continuous-time value.
pub const DISCRETIZATION_ALLOWANCE: f64 = 2e-3;

/// A quantity with its standard error (zero for exact values).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
}

impl Quantity {
    pub fn exact(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            value,
            std_error: 0.0,
        }
    }

    pub fn estimate(label: impl Into<String>, value: f64, std_error: f64) -> Self {
        Self {
            label: label.into(),
            value,
            std_error,
        }
    }
}

/// Check of `lhs ≤ rhs`: passes when
/// `lhs ≤ rhs + Z_CHECK·√(se_l² + se_r²) + allowance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub anchor: String,
    pub lhs: Quantity,
    pub rhs: Quantity,
    pub allowance: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    /// `Z_CHECK·√(se_l² + se_r²) + allowance`.
    pub tolerance: f64,
    pub pass: bool,
    /// Non-gating rows are reported but do not affect the verdict.
    pub gating: bool,
}

impl Comparison {
    pub fn le(anchor: impl Into<String>, lhs: Quantity, rhs: Quantity, allowance: f64) -> Self {
        let slack = rhs.value - lhs.value;
        let tolerance = Z_CHECK * lhs.std_error.hypot(rhs.std_error) + allowance;
        Self {
            anchor: anchor.into(),
            pass: slack >= -tolerance,
            lhs,
            rhs,
            allowance,
            slack,
            tolerance,
            gating: true,
        }
    }

    pub fn non_gating(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: {} = {} <= {} = {} (slack {:+.3e}, tolerance {:.3e}) {}",
            self.anchor,
            self.lhs.label,
            show(self.lhs.value),
            self.rhs.label,
            show(self.rhs.value),
            self.slack,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Six decimals, or scientific notation for small non-zero values.
pub fn show(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

/// Running mean and second moment (Welford), mergeable with Chan's rule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Chunk boundaries for `n` items.
pub fn chunks(n: usize) -> impl Iterator<Item = std::ops::Range<usize>> + Clone {
    (0..n.div_ceil(CHUNK)).map(move |c| c * CHUNK..((c + 1) * CHUNK).min(n))
}

/// `log(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_moments_match_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut direct = Moments::default();
        xs.iter().for_each(|x| direct.push(*x));
        let mut merged = Moments::default();
        for c in xs.chunks(77) {
            let mut m = Moments::default();
            c.iter().for_each(|x| m.push(*x));
            merged.merge(&m);
        }
        assert!((direct.mean - merged.mean).abs() < 1e-12);
        assert!((direct.variance() - merged.variance()).abs() < 1e-10);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((direct.variance() - var).abs() < 1e-10);
    }

    #[test]
    fn log_add_exp_edges() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.0), 1.0);
        assert_eq!(log_add_exp(f64::INFINITY, f64::INFINITY), f64::INFINITY);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn comparison_policy() {
        let c = Comparison::le(
            "x",
            Quantity::estimate("a", 1.0, 0.03),
            Quantity::estimate("b", 0.9, 0.04),
            0.0,
        );
        assert!((c.tolerance - 0.15).abs() < 1e-12);
        assert!(c.pass);
        let c = Comparison::le("x", Quantity::exact("a", 1.0), Quantity::exact("b", 0.99), 2e-3);
        assert!(!c.pass);
        assert!(c.describe().ends_with("FAIL"));
    }

    #[test]
    fn chunk_ranges_cover() {
        let v: Vec<_> = chunks(1100).collect();
        assert_eq!(v, vec![0..512, 512..1024, 1024..1100]);
        assert_eq!(chunks(0).count(), 0);
        assert_eq!(pairwise_sum(&[1.0; 100]), 100.0);
    }
}
