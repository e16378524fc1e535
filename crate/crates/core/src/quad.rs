//! Adaptive Gauss–Kronrod (G7/K15) quadrature.
//!
//! [`integrate_breaks`] runs a global adaptive scheme seeded with a caller
//! supplied partition, bisecting the interval with the largest error estimate
//! until the total estimate meets the tolerance. [`integrate_pieces`] treats
//! each piece independently (tolerance shared in proportion to width), which
//! lets pieces run in parallel while keeping the summation order fixed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::par::Execution;

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

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on the number of subintervals per adaptive run.
    pub max_intervals: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-9,
            rel_tol: 0.0,
            max_intervals: 20_000,
        }
    }
}

impl QuadSpec {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        QuadSpec {
            abs_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

impl QuadResult {
    pub fn zero() -> Self {
        QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// One G7/K15 pass on `[a, b]`: returns `(kronrod value, error estimate)`.
pub fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let res_k_scaled = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (res_k_scaled, err)
}

/// Sorts, clips to `[lo, hi]` and deduplicates a set of breakpoints, always
/// including both ends.
pub fn normalize_breaks(points: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut out: Vec<f64> = points
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    out.push(lo);
    out.push(hi);
    out.sort_by(f64::total_cmp);
    let scale = (hi - lo).abs().max(1.0);
    out.dedup_by(|b, a| (*b - *a).abs() <= 4.0 * f64::EPSILON * scale);
    if let Some(last) = out.last_mut() {
        *last = hi;
    }
    out
}

pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, spec: &QuadSpec) -> QuadResult {
    integrate_breaks(f, &[a, b], spec)
}

/// Global adaptive integration over the partition given by sorted `breaks`.
pub fn integrate_breaks<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    breaks: &[f64],
    spec: &QuadSpec,
) -> QuadResult {
    if breaks.len() < 2 {
        return QuadResult::zero();
    }
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 2);
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (value, error) = gk15(f, a, b);
        total += value;
        total_err += error;
        heap.push(Segment { a, b, value, error });
    }
    let limit = spec.max_intervals.max(heap.len());
    let mut converged = true;
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            converged = false;
            break;
        }
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if heap.len() >= limit {
            converged = false;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval collapsed to machine resolution.
            heap.push(worst);
            converged = false;
            break;
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum in interval order so the value does not depend on refinement history.
    let mut segments = heap.into_vec();
    segments.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = segments.iter().map(|s| s.value).sum();
    let error: f64 = segments.iter().map(|s| s.error).sum();
    QuadResult {
        value,
        error,
        intervals: segments.len(),
        converged: converged && value.is_finite(),
    }
}

/// Independent adaptive runs on each piece of `breaks`, tolerance split in
/// proportion to piece width; the pieces may be evaluated in parallel.
pub fn integrate_pieces<F>(f: &F, breaks: &[f64], spec: &QuadSpec, exec: Execution) -> QuadResult
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    if breaks.len() < 2 {
        return QuadResult::zero();
    }
    let total_width = breaks[breaks.len() - 1] - breaks[0];
    if total_width <= 0.0 {
        return QuadResult::zero();
    }
    let pieces = breaks.len() - 1;
    let per_piece_limit = (spec.max_intervals / 8).max(64);
    let parts = exec.map(pieces, |i| {
        let (a, b) = (breaks[i], breaks[i + 1]);
        let share = (b - a) / total_width;
        let local = QuadSpec {
            abs_tol: spec.abs_tol * share,
            rel_tol: spec.rel_tol,
            max_intervals: per_piece_limit,
        };
        integrate(f, a, b, &local)
    });
    let mut out = QuadResult::zero();
    for p in parts {
        out.value += p.value;
        out.error += p.error;
        out.intervals += p.intervals;
        out.converged &= p.converged;
    }
    out.converged &= out.value.is_finite();
    out
}

/// `∫_a^∞ f` through the substitution `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    spec: &QuadSpec,
) -> QuadResult {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s);
        if v == 0.0 {
            0.0
        } else {
            v / (s * s)
        }
    };
    integrate(&g, 0.0, 1.0, spec)
}
