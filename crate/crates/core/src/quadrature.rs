//! Numerical integration rules.

/// Positive abscissae of the 15-point Kronrod rule, descending; index 7 is 0.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// 7-point Gauss weights at `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: `(kronrod, |kronrod − gauss|)`.
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss–Kronrod integration: the panel with the largest
/// error estimate is bisected until the summed estimate is below
/// `max(abs_tol, rel_tol·|value|)` or `max_panels` is reached.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            error: 0.0,
            panels: 0,
        };
    }
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || panels.len() >= max_panels {
            return Integral {
                value,
                error,
                panels: panels.len(),
            };
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Physicists' Gauss–Hermite nodes for weight `e^{−x²}`, 7 points.
pub const HERMITE7_NODES: [f64; 7] = [
    -2.651_961_356_835_233_5,
    -1.673_551_628_767_471_4,
    -0.816_287_882_858_964_7,
    0.0,
    0.816_287_882_858_964_7,
    1.673_551_628_767_471_4,
    2.651_961_356_835_233_5,
];

pub const HERMITE7_WEIGHTS: [f64; 7] = [
    0.000_971_781_245_099_519_2,
    0.054_515_582_819_127_03,
    0.425_607_252_610_127_8,
    0.810_264_617_556_807_3,
    0.425_607_252_610_127_8,
    0.054_515_582_819_127_03,
    0.000_971_781_245_099_519_2,
];

/// Standard-normal nodes `√2·x_j` and probability weights `w_j/√π`.
pub fn standard_normal_rule() -> [(f64, f64); 7] {
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    std::array::from_fn(|j| {
        (
            std::f64::consts::SQRT_2 * HERMITE7_NODES[j],
            HERMITE7_WEIGHTS[j] * inv_sqrt_pi,
        )
    })
}
