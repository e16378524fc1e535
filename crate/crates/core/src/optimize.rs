//! Grid search with one golden-section refinement pass.
//!
//! All suprema and infima over a continuous variable use this scheme: a
//! uniform grid (the step is part of the result) followed by golden-section
//! search on the two cells around the best grid point. The refined value is
//! only kept when it improves on the grid value, so the result is always a
//! value actually attained by the function.

use serde::{Deserialize, Serialize};

use crate::par::Execution;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub arg: f64,
    pub value: f64,
    /// Best value seen on the grid before refinement.
    pub grid_value: f64,
    pub grid_step: f64,
}

impl Sense {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Max => a > b,
            Sense::Min => a < b,
        }
    }
}

/// Number of grid cells used for `[lo, hi]` at the requested step.
pub fn grid_cells(lo: f64, hi: f64, step: f64) -> usize {
    (((hi - lo) / step).ceil() as usize).max(1)
}

pub fn grid_extremum<F>(
    f: &F,
    lo: f64,
    hi: f64,
    step: f64,
    sense: Sense,
    exec: Execution,
) -> Extremum
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    let cells = grid_cells(lo, hi, step);
    let h = (hi - lo) / cells as f64;
    let values = exec.map(cells + 1, |i| {
        let x = if i == cells { hi } else { lo + i as f64 * h };
        (x, f(x))
    });
    let mut best = values[0];
    for &(x, v) in &values[1..] {
        if sense.better(v, best.1) || best.1.is_nan() {
            best = (x, v);
        }
    }
    let grid_value = best.1;
    let a = (best.0 - h).max(lo);
    let b = (best.0 + h).min(hi);
    let (xr, vr) = golden(f, a, b, sense, 60);
    if sense.better(vr, best.1) {
        best = (xr, vr);
    }
    Extremum {
        arg: best.0,
        value: best.1,
        grid_value,
        grid_step: h,
    }
}

fn golden<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    mut a: f64,
    mut b: f64,
    sense: Sense,
    iters: usize,
) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if sense.better(fc, fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    if sense.better(fc, fd) {
        (c, fc)
    } else {
        (d, fd)
    }
}
