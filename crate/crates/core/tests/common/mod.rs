#![allow(dead_code)]

use std::path::PathBuf;

use maxprod::Signal;
use rand::Rng;

/// Root of the shipped experiment configs.
pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Sorted knots in `[lo, hi]` including both ends.
fn knots<R: Rng>(rng: &mut R, lo: f64, hi: f64, inner: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..inner).map(|_| rng.random_range(lo..hi)).collect();
    t.push(lo);
    t.push(hi);
    t.sort_by(f64::total_cmp);
    t.dedup_by(|b, a| *b - *a < 1e-3);
    if t.len() < 2 {
        t = vec![lo, hi];
    }
    t
}

/// Nonnegative piecewise-constant signal supported in `[lo, hi]`.
pub fn random_step<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Signal {
    let a = rng.random_range(lo..(lo + hi) / 2.0);
    let b = rng.random_range((lo + hi) / 2.0..hi);
    let inner = rng.random_range(0..5);
    let edges = knots(rng, a, b, inner);
    let values = (1..edges.len())
        .map(|_| rng.random_range(0.0..2.0))
        .collect();
    Signal::piecewise_constant("random-step", edges, values).expect("valid step")
}

/// Continuous nonnegative piecewise-linear signal vanishing at both ends of its support.
pub fn random_spline<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Signal {
    let a = rng.random_range(lo..(lo + hi) / 2.0);
    let b = rng.random_range((lo + hi) / 2.0..hi);
    let inner = rng.random_range(1..6);
    let t = knots(rng, a, b, inner);
    let mut v: Vec<f64> = t.iter().map(|_| rng.random_range(0.0..2.0)).collect();
    v[0] = 0.0;
    *v.last_mut().unwrap() = 0.0;
    let (tt, vv) = (t.clone(), v);
    Signal::new("random-spline", move |x| {
        let i = tt.partition_point(|k| *k <= x).clamp(1, tt.len() - 1);
        let (x0, x1) = (tt[i - 1], tt[i]);
        let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        vv[i - 1] + s * (vv[i] - vv[i - 1])
    })
    .with_support(t[0], t[t.len() - 1])
    .with_breakpoints(t)
    .with_lower_bound(0.0)
}

pub fn random_signal<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Signal {
    if rng.random_bool(0.5) {
        random_step(rng, lo, hi)
    } else {
        random_spline(rng, lo, hi)
    }
}
