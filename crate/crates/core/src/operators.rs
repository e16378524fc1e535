//! Max-product Kantorovich sampling operators
//!
//! `K_n f(x) = ⋁_{k∈J_n} χ(nx-k) · [n ∫_{k/n}^{(k+1)/n} f] / ⋁_{k∈J_n} χ(nx-k)`
//!
//! with `J_n = ℤ` on the real line and `J_n = {⌈na⌉, …, ⌊nb⌋-1}` on `[a, b]`,
//! plus the auxiliary operators used in the error analysis, the shifted
//! variant for signals bounded below and the linear (sum) baseline.
//!
//! The supremum over `k` is evaluated exactly: shifts are visited in order
//! of increasing distance `|nx - k|` and the walk stops once the kernel
//! envelope proves that no unvisited shift can improve the running maxima.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::orlicz::{Domain, DomainFlavor};
use crate::par::Execution;
use crate::quad::{gk15, integrate_breaks, normalize_breaks, QuadSpec};
use crate::signal::Signal;

/// Largest `|nx - k|` visited for kernels without compact support.
pub const DECAY_WINDOW: f64 = 4096.0;

/// Slack allowed on the denominator guard `⋁ χ(nx-k) ≥ a_chi`.
const GUARD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMethod {
    /// Closed-form antiderivative, or the cell lies where the signal is constant.
    Exact,
    /// One Gauss-Kronrod pass per smooth piece.
    Kronrod,
    /// Adaptive refinement was needed.
    Adaptive,
    /// Adaptive refinement hit its limit; the value is the best estimate.
    Unconverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub value: f64,
    pub method: MeanMethod,
}

/// `n ∫_{k/n}^{(k+1)/n} f(t) dt`.
pub fn kantorovich_mean(f: &Signal, k: i64, n: u32) -> CellMean {
    let nf = n as f64;
    let (lo, hi) = (k as f64 / nf, (k + 1) as f64 / nf);
    window_mean(f, lo, hi, nf)
}

/// `scale ∫_lo^hi f`.
fn window_mean(f: &Signal, lo: f64, hi: f64, scale: f64) -> CellMean {
    if let Some(big_f) = f.antiderivative() {
        return CellMean {
            value: scale * (big_f(hi) - big_f(lo)),
            method: MeanMethod::Exact,
        };
    }
    if let Some((s0, s1)) = f.support {
        if hi <= s0 || lo >= s1 {
            return CellMean {
                value: f.baseline * scale * (hi - lo),
                method: MeanMethod::Exact,
            };
        }
    }
    let breaks = normalize_breaks(&f.breaks_in(lo, hi).collect::<Vec<_>>(), lo, hi);
    let g = |t: f64| f.value(t);
    let (mut sum, mut err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        let (v, e) = gk15(&g, w[0], w[1]);
        sum += v;
        err += e;
    }
    let tol = 1e-13 * (hi - lo).max(f64::MIN_POSITIVE) * scale.max(1.0);
    if err <= tol && sum.is_finite() {
        return CellMean {
            value: scale * sum,
            method: MeanMethod::Kronrod,
        };
    }
    let spec = QuadSpec {
        abs_tol: tol,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let r = integrate_breaks(&g, &breaks, &spec);
    CellMean {
        value: scale * r.value,
        method: if r.converged {
            MeanMethod::Adaptive
        } else {
            MeanMethod::Unconverged
        },
    }
}

/// Visits `k ∈ [range.0, range.1]` in order of increasing `|nx - k|` until
/// `visit` returns `false` or the range is exhausted.
fn walk_outward(nx: f64, range: (i64, i64), mut visit: impl FnMut(i64, f64) -> bool) {
    if range.0 > range.1 {
        return;
    }
    let base = nx.floor() as i64;
    let mut l = base.min(range.1);
    let mut r = (base + 1).max(range.0);
    loop {
        let dl = if l >= range.0 {
            nx - l as f64
        } else {
            f64::INFINITY
        };
        let dr = if r <= range.1 {
            r as f64 - nx
        } else {
            f64::INFINITY
        };
        if dl.is_infinite() && dr.is_infinite() {
            return;
        }
        let go_on = if dl <= dr {
            let v = visit(l, dl);
            l -= 1;
            v
        } else {
            let v = visit(r, dr);
            r += 1;
            v
        };
        if !go_on {
            return;
        }
    }
}

const ALL_SHIFTS: (i64, i64) = (i64::MIN / 4, i64::MAX / 4);

#[derive(Debug, Clone)]
pub struct OperatorInstance {
    kernel: Kernel,
    n: u32,
    domain: Domain,
    a_chi: f64,
    /// `J_n`; all of ℤ on the real line.
    j_range: (i64, i64),
    search_radius: f64,
}

impl OperatorInstance {
    /// Builds `K_n` on `domain`. On an interval, `n` is refused unless `J_n` is
    /// non-empty and `⋁_{k∈J_n} χ(nx-k) ≥ a_chi` on a grid over `[a, b]`.
    pub fn new(kernel: &Kernel, n: u32, domain: Domain) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        let a_chi = kernel.a_chi(domain.flavor())?;
        let search_radius = kernel.support_radius().unwrap_or(DECAY_WINDOW);
        let j_range = match domain {
            Domain::RealLine { .. } => ALL_SHIFTS,
            Domain::Interval { a, b } => {
                if let Err(reason) = interval_admissible(kernel, n, a, b, a_chi) {
                    return Err(Error::NThreshold {
                        n,
                        min_n: min_admissible_n(kernel, a, b, 1024),
                        a,
                        b,
                        reason,
                    });
                }
                interval_shifts(n, a, b)
            }
        };
        Ok(OperatorInstance {
            kernel: kernel.clone(),
            n,
            domain,
            a_chi,
            j_range,
            search_radius,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn a_chi(&self) -> f64 {
        self.a_chi
    }

    /// `J_n` as an inclusive range, `None` on the real line.
    pub fn index_set(&self) -> Option<(i64, i64)> {
        match self.domain {
            Domain::RealLine { .. } => None,
            Domain::Interval { .. } => Some(self.j_range),
        }
    }

    /// `⋁_{k∈J_n} χ(nx-k)`.
    pub fn kernel_sup(&self, x: f64) -> f64 {
        self.kernel_sup_scaled(self.n as f64 * x)
    }

    fn kernel_sup_scaled(&self, nx: f64) -> f64 {
        let mut den = f64::NEG_INFINITY;
        walk_outward(nx, self.j_range, |k, d| {
            if d > self.search_radius {
                return false;
            }
            den = den.max(self.kernel.value(nx - k as f64));
            self.kernel.envelope(d) > den
        });
        den
    }

    fn guard(&self, x: f64, den: f64) -> Result<()> {
        if den >= self.a_chi - GUARD_SLACK {
            Ok(())
        } else {
            Err(Error::DenominatorGuard {
                n: self.n,
                x,
                value: den,
                a_chi: self.a_chi,
            })
        }
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!(
                "evaluation point must be finite, got {x}"
            )));
        }
        if let Domain::Interval { a, b } = self.domain {
            if x < a || x > b {
                return Err(Error::InvalidInput(format!(
                    "x = {x} lies outside [{a}, {b}]"
                )));
            }
        }
        Ok(())
    }

    /// Computes and caches the cell means of a nonnegative signal.
    pub fn prepare(&self, f: &Signal) -> Result<PreparedOperator<'_>> {
        self.prepare_with_offset(f, 0.0)
    }

    /// Prepares `K̄_n f = K_n(f - c) + c` with `c` the declared lower bound of `f`.
    pub fn prepare_shifted(&self, f: &Signal) -> Result<PreparedOperator<'_>> {
        let c = f.lower_bound.ok_or_else(|| {
            Error::Contract(format!(
                "signal {} has no declared lower bound for the shifted operator",
                f.name
            ))
        })?;
        self.prepare_with_offset(&f.minus_constant(c), c)
    }

    fn prepare_with_offset(&self, f: &Signal, offset: f64) -> Result<PreparedOperator<'_>> {
        if !f.nonneg {
            return Err(Error::Contract(format!(
                "signal {} is not declared nonnegative; use the shifted operator",
                f.name
            )));
        }
        let n = self.n;
        let (k_lo, k_hi) = match self.domain {
            Domain::Interval { .. } => self.j_range,
            Domain::RealLine { .. } => {
                let (s0, s1) = f.support.ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "signal {} needs a declared support on the real line",
                        f.name
                    ))
                })?;
                let nf = n as f64;
                ((nf * s0).floor() as i64 - 1, (nf * s1).ceil() as i64)
            }
        };
        let cells = (k_hi - k_lo + 1).max(0) as usize;
        let computed: Vec<CellMean> = (0..cells)
            .map(|i| kantorovich_mean(f, k_lo + i as i64, n))
            .collect();
        check_nonneg_samples(f, k_lo, cells, n)?;
        let means: Vec<f64> = computed.iter().map(|c| c.value).collect();
        let max_abs_mean = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let count = |m: MeanMethod| computed.iter().filter(|c| c.method == m).count();
        Ok(PreparedOperator {
            op: self,
            signal: f.clone(),
            k_lo,
            means,
            baseline: f.baseline,
            max_abs_mean,
            offset,
            adaptive_cells: count(MeanMethod::Adaptive),
            unconverged_cells: count(MeanMethod::Unconverged),
        })
    }

    /// Linear baseline `Σ χ(nx-k) mean_k / Σ χ(nx-k)` over `J_n ∩ {|nx-k| ≤ window}`.
    pub fn linear_baseline_apply(&self, f: &Signal, x: f64) -> Result<LinearValue> {
        self.check_x(x)?;
        let n = self.n;
        let nx = n as f64 * x;
        let r = self.search_radius;
        let lo = ((nx - r).ceil() as i64).max(self.j_range.0);
        let hi = ((nx + r).floor() as i64).min(self.j_range.1);
        let (mut num, mut den) = (0.0, 0.0);
        for k in lo..=hi {
            let c = self.kernel.value(nx - k as f64);
            if c != 0.0 {
                num += c * kantorovich_mean(f, k, n).value;
                den += c;
            }
        }
        if den.abs() < 1e-8 {
            return Err(Error::BaselineUnavailable { n, x, sum: den });
        }
        let tail_bound = match (self.kernel.support_radius(), self.kernel.decay) {
            (Some(_), _) => 0.0,
            (None, Some(d)) => {
                2.0 * d.constant
                    * (r.powf(-d.exponent) + r.powf(1.0 - d.exponent) / (d.exponent - 1.0))
            }
            (None, None) => f64::INFINITY,
        };
        Ok(LinearValue {
            value: num / den,
            kernel_sum: den,
            tail_bound,
        })
    }

    /// `P_n f(x)`: the cell means are taken over `[x, x + 1/n]` for every `k`.
    pub fn auxiliary_apply(&self, f: &Signal, x: f64) -> Result<f64> {
        if self.domain.flavor() != DomainFlavor::RealLine {
            return Err(Error::InvalidInput(
                "auxiliary operators are defined on the real line".into(),
            ));
        }
        self.check_x(x)?;
        let nf = self.n as f64;
        let mean = window_mean(f, x, x + 1.0 / nf, nf).value;
        if mean < 0.0 {
            return Err(Error::Contract(format!(
                "signal {} has a negative local mean at x = {x}",
                f.name
            )));
        }
        let den = self.kernel_sup(x);
        self.guard(x, den)?;
        // The mean does not depend on k, so the numerator is mean · ⋁ χ(nx-k).
        Ok(mean * den / den)
    }

    /// Right-hand side of `|K_n f - P_n f|(x) ≤ ⋁ χ(nx-k) [n ∫_cell |f(t) - f(t+x-k/n)| dt] / ⋁ χ(nx-k)`,
    /// with the shifts beyond `window` closed by the kernel envelope.
    pub fn triangle_bound(&self, f: &Signal, x: f64, window: f64) -> Result<f64> {
        if self.domain.flavor() != DomainFlavor::RealLine {
            return Err(Error::InvalidInput(
                "auxiliary operators are defined on the real line".into(),
            ));
        }
        self.check_x(x)?;
        let n = self.n;
        let nf = n as f64;
        let nx = nf * x;
        let shifted_mean = window_mean(f, x, x + 1.0 / nf, nf).value.abs();
        let prepared = self.prepare(f)?;
        let bound_d = prepared.max_abs_mean.max(f.baseline.abs()) + shifted_mean;
        let window = window.min(self.search_radius);
        let spec = QuadSpec::with_abs_tol(1e-13);
        let mut num = f64::NEG_INFINITY;
        let mut den = f64::NEG_INFINITY;
        let mut reached = 0.0;
        walk_outward(nx, self.j_range, |k, d| {
            if d > window {
                return false;
            }
            reached = d;
            let c = self.kernel.value(nx - k as f64);
            den = den.max(c);
            let (lo, hi) = (k as f64 / nf, (k + 1) as f64 / nf);
            let shift = x - k as f64 / nf;
            let mut pts: Vec<f64> = f.breaks_in(lo, hi).collect();
            pts.extend(f.breaks_in(lo + shift, hi + shift).map(|p| p - shift));
            let g = |t: f64| (f.value(t) - f.value(t + shift)).abs();
            let dk = nf * integrate_breaks(&g, &normalize_breaks(&pts, lo, hi), &spec).value;
            num = num.max(c * dk);
            let env = self.kernel.envelope(d);
            !(env <= den && env * bound_d <= num)
        });
        self.guard(x, den)?;
        let truncation = self.kernel.envelope(reached) * bound_d;
        Ok(num.max(truncation) / den)
    }

    /// `K_n` applied on a list of points.
    pub fn evaluate(&self, f: &Signal, xs: &[f64], exec: Execution) -> Result<Vec<f64>> {
        self.prepare(f)?.evaluate(xs, exec)
    }
}

/// Value of the linear baseline with the kernel sum and the truncation bound of the sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearValue {
    pub value: f64,
    pub kernel_sum: f64,
    pub tail_bound: f64,
}

/// `K_n` with the cell means of one signal cached.
#[derive(Debug, Clone)]
pub struct PreparedOperator<'a> {
    op: &'a OperatorInstance,
    signal: Signal,
    k_lo: i64,
    means: Vec<f64>,
    baseline: f64,
    max_abs_mean: f64,
    offset: f64,
    pub adaptive_cells: usize,
    pub unconverged_cells: usize,
}

impl PreparedOperator<'_> {
    pub fn operator(&self) -> &OperatorInstance {
        self.op
    }

    /// The (possibly shifted) signal the means were computed for.
    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Largest `|mean_k|` over all `k`.
    pub fn max_abs_mean(&self) -> f64 {
        self.max_abs_mean.max(self.baseline.abs())
    }

    /// Range of `k` whose cell means were computed; other shifts use the baseline.
    pub fn cell_range(&self) -> (i64, i64) {
        (self.k_lo, self.k_lo + self.means.len() as i64 - 1)
    }

    pub fn mean(&self, k: i64) -> f64 {
        let i = k - self.k_lo;
        if i >= 0 && (i as usize) < self.means.len() {
            self.means[i as usize]
        } else {
            self.baseline
        }
    }

    /// `K_n f(x)` (plus the offset for the shifted form).
    pub fn apply(&self, x: f64) -> Result<f64> {
        let op = self.op;
        op.check_x(x)?;
        let nx = op.n as f64 * x;
        let (c_lo, c_hi) = self.cell_range();
        let has_outside = op.j_range.0 < c_lo || op.j_range.1 > c_hi;
        let (num, den) = if has_outside && self.baseline == 0.0 {
            self.sup_zero_baseline(nx)
        } else {
            self.sup_general(nx)
        };
        op.guard(x, den)?;
        Ok(num / den + self.offset)
    }

    /// Shifts outside the computed cells contribute `χ · 0`, so once the
    /// denominator is known only the computed cells need visiting.
    fn sup_zero_baseline(&self, nx: f64) -> (f64, f64) {
        let op = self.op;
        let den = op.kernel_sup_scaled(nx);
        let (c_lo, c_hi) = self.cell_range();
        let range = (c_lo.max(op.j_range.0), c_hi.min(op.j_range.1));
        let mut num = 0.0f64;
        walk_outward(nx, range, |k, d| {
            if d > op.search_radius {
                return false;
            }
            num = num.max(op.kernel.value(nx - k as f64) * self.mean(k));
            op.kernel.envelope(d) * self.max_abs_mean > num
        });
        (num, den)
    }

    fn sup_general(&self, nx: f64) -> (f64, f64) {
        let op = self.op;
        let (c_lo, c_hi) = self.cell_range();
        let has_outside = op.j_range.0 < c_lo || op.j_range.1 > c_hi;
        let inside_reach = (nx - c_lo as f64).abs().max((nx - c_hi as f64).abs());
        let mut den = f64::NEG_INFINITY;
        let mut num = f64::NEG_INFINITY;
        walk_outward(nx, op.j_range, |k, d| {
            if d > op.search_radius {
                return false;
            }
            let c = op.kernel.value(nx - k as f64);
            den = den.max(c);
            num = num.max(c * self.mean(k));
            let env = op.kernel.envelope(d);
            let mut remaining = 0.0f64;
            if d <= inside_reach {
                remaining = self.max_abs_mean;
            }
            if has_outside {
                remaining = remaining.max(self.baseline.abs());
            }
            !(env <= den && env * remaining <= num)
        });
        (num, den)
    }

    pub fn evaluate(&self, xs: &[f64], exec: Execution) -> Result<Vec<f64>> {
        exec.map_slice(xs, |&x| self.apply(x)).into_iter().collect()
    }
}

/// `J_n = {⌈na⌉, …, ⌊nb⌋-1}`.
pub fn interval_shifts(n: u32, a: f64, b: f64) -> (i64, i64) {
    let nf = n as f64;
    ((nf * a).ceil() as i64, (nf * b).floor() as i64 - 1)
}

fn admissibility_grid(n: u32, a: f64, b: f64) -> Vec<f64> {
    let step = (1e-3f64).min(1.0 / (16.0 * n as f64));
    let cells = (((b - a) / step).ceil() as usize).max(1);
    (0..=cells)
        .map(|i| {
            if i == cells {
                b
            } else {
                a + (b - a) * i as f64 / cells as f64
            }
        })
        .collect()
}

fn interval_admissible(
    kernel: &Kernel,
    n: u32,
    a: f64,
    b: f64,
    a_chi: f64,
) -> std::result::Result<(), String> {
    let range = interval_shifts(n, a, b);
    if range.0 > range.1 {
        return Err(format!("J_n is empty ({} > {})", range.0, range.1));
    }
    let radius = kernel.support_radius().unwrap_or(DECAY_WINDOW);
    let nf = n as f64;
    for x in admissibility_grid(n, a, b) {
        let nx = nf * x;
        let mut den = f64::NEG_INFINITY;
        walk_outward(nx, range, |k, d| {
            if d > radius {
                return false;
            }
            den = den.max(kernel.value(nx - k as f64));
            kernel.envelope(d) > den
        });
        if den < a_chi - GUARD_SLACK {
            return Err(format!(
                "kernel supremum over J_n is {den:e} < a_chi = {a_chi:e} at x = {x}"
            ));
        }
    }
    Ok(())
}

/// Smallest `n ≤ limit` accepted on `[a, b]`.
pub fn min_admissible_n(kernel: &Kernel, a: f64, b: f64, limit: u32) -> Option<u32> {
    let a_chi = kernel.a_chi(DomainFlavor::Compact).ok()?;
    (1..=limit).find(|&n| interval_admissible(kernel, n, a, b, a_chi).is_ok())
}

/// Samples each computed cell; a declared-nonnegative signal must not dip below zero.
fn check_nonneg_samples(f: &Signal, k_lo: i64, cells: usize, n: u32) -> Result<()> {
    let nf = n as f64;
    let per_cell = 16;
    for i in 0..cells {
        let k = k_lo + i as i64;
        for j in 0..=per_cell {
            let t = (k as f64 + j as f64 / per_cell as f64) / nf;
            let v = f.value(t);
            if v < -1e-12 {
                return Err(Error::Contract(format!(
                    "signal {} takes the negative value {v:e} at t = {t}",
                    f.name
                )));
            }
        }
    }
    if f.baseline < -1e-12 {
        return Err(Error::Contract(format!(
            "signal {} has negative baseline {}",
            f.name, f.baseline
        )));
    }
    Ok(())
}
