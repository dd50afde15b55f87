//! One-dimensional numerical integration.
//!
//! [`integrate`] is a globally adaptive Gauss–Kronrod (7/15) scheme: the
//! interval with the largest error estimate is bisected until the summed
//! estimate falls under the requested relative tolerance. [`gauss_legendre`]
//! provides fixed-order rules for smooth tensor-product integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Target relative error of the total.
    pub rel_tol: f64,
    /// Maximum number of bisections applied to any one initial interval.
    pub max_depth: u32,
    /// Cap on the number of live subintervals.
    pub max_intervals: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_depth: 20,
            max_intervals: 20_000,
        }
    }
}

impl QuadratureConfig {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    // Largest error first; position breaks ties so the order is total.
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
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

/// Integrates `f` over the partition given by `breakpoints` (sorted,
/// at least two entries). Extra breakpoints are where the integrand has
/// kinks or sharp features.
pub fn integrate<F>(mut f: F, breakpoints: &[f64], cfg: &QuadratureConfig) -> Result<Quadrature>
where
    F: FnMut(f64) -> f64,
{
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let (value, error) = kronrod(&mut f, w[0], w[1]);
            evaluations += 15;
            heap.push(Piece {
                a: w[0],
                b: w[1],
                value,
                error,
                depth: 0,
            });
        }
    }
    let totals = |heap: &BinaryHeap<Piece>| {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
    };
    loop {
        let (value, error) = totals(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure {
                estimate: value,
                error_bound: error,
            });
        }
        if error <= cfg.rel_tol * value.abs() || error <= f64::MIN_POSITIVE {
            return Ok(Quadrature {
                value,
                error,
                evaluations,
            });
        }
        let worst = heap.pop().expect("non-empty when error > 0");
        if worst.depth >= cfg.max_depth || heap.len() + 2 > cfg.max_intervals {
            heap.push(worst);
            let (value, error) = totals(&heap);
            return Err(Error::QuadratureFailure {
                estimate: value,
                error_bound: error,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod(&mut f, a, b);
            evaluations += 15;
            heap.push(Piece {
                a,
                b,
                value,
                error,
                depth: worst.depth + 1,
            });
        }
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
