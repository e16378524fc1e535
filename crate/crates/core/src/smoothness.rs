//! Modulus of smoothness `ω(λf, δ)_φ = sup_{|h|≤δ} I^φ[λ(f(·+h) - f)]`,
//! Lipschitz-exponent fits and the Orlicz-type K-functional
//! `𝒦(f, λ, δ)_φ = inf_{g∈C¹₊} { I^φ[λ(f - g)] + δ φ(‖g'‖_∞) }`.
//!
//! Both extremal problems are replaced by finite families: ω is a maximum
//! over a uniform `h`-grid (a lower bound of the true supremum) and 𝒦 is a
//! minimum over smoothed copies of `f` (an upper bound of the true infimum).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::log_log_fit;
use crate::optimize::{grid_extremum, Sense};
use crate::orlicz::{modular_fn, Domain, ModularReport, PhiFunction};
use crate::par::Execution;
use crate::quad::{gk15, normalize_breaks, QuadSpec};
use crate::settings::Resolution;
use crate::signal::Signal;

/// How `f(· + h)` is handled near the ends of an interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Integrate over `Ω ∩ (Ω - h)` only.
    #[default]
    Overlap,
    /// Extend `f` by zero outside `Ω`.
    ZeroExtension,
}

/// `I^φ[λ(f(· + h) - f)]` on `domain`.
pub fn shift_modular(
    phi: &PhiFunction,
    f: &Signal,
    lambda: f64,
    h: f64,
    domain: &Domain,
    mode: BoundaryMode,
    quad: &QuadSpec,
) -> ModularReport {
    if h == 0.0 {
        return modular_fn(phi, lambda, &|_| 0.0, &[0.0, 0.0], quad);
    }
    let (lo, hi, zero_ext) = match (*domain, mode) {
        (Domain::RealLine { half_width }, _) => match f.support {
            // Outside the union of the two supports both terms equal the baseline.
            Some((s0, s1)) => (s0.min(s0 - h), s1.max(s1 - h), None),
            None => (-half_width, half_width, None),
        },
        (Domain::Interval { a, b }, BoundaryMode::Overlap) => (a.max(a - h), b.min(b - h), None),
        (Domain::Interval { a, b }, BoundaryMode::ZeroExtension) => {
            (a.min(a - h), b.max(b - h), Some((a, b)))
        }
    };
    if hi <= lo {
        return modular_fn(phi, lambda, &|_| 0.0, &[0.0, 0.0], quad);
    }
    let value = |x: f64| match zero_ext {
        Some((a, b)) if x < a || x > b => 0.0,
        _ => f.value(x),
    };
    let g = |x: f64| value(x + h) - value(x);
    let mut pts: Vec<f64> = f.breakpoints.iter().flat_map(|&p| [p, p - h]).collect();
    if let Some((a, b)) = zero_ext {
        pts.extend([a, b, a - h, b - h]);
    }
    modular_fn(phi, lambda, &g, &normalize_breaks(&pts, lo, hi), quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusValue {
    pub delta: f64,
    /// Maximum over the grid; `f64::INFINITY` when some shift has an infinite modular.
    pub omega: f64,
    pub arg_h: f64,
    pub h_points: usize,
}

/// `max_{h ∈ {±jδ/H : j = 0..H}} I^φ[λ(f(· + h) - f)]`.
pub fn modulus(
    phi: &PhiFunction,
    f: &Signal,
    lambda: f64,
    delta: f64,
    domain: &Domain,
    mode: BoundaryMode,
    res: &Resolution,
) -> Result<ModulusValue> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta must be finite and ≥ 0, got {delta}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let hp = res.h_points.max(1);
    if delta == 0.0 {
        return Ok(ModulusValue {
            delta,
            omega: 0.0,
            arg_h: 0.0,
            h_points: hp,
        });
    }
    let shifts: Vec<f64> = (1..=hp)
        .flat_map(|j| {
            let h = delta * j as f64 / hp as f64;
            [h, -h]
        })
        .collect();
    let values = res.exec.map_slice(&shifts, |&h| {
        shift_modular(phi, f, lambda, h, domain, mode, &res.quad).value
    });
    let (mut omega, mut arg_h) = (0.0, 0.0);
    for (h, v) in shifts.iter().zip(&values) {
        if *v > omega || v.is_infinite() {
            omega = *v;
            arg_h = *h;
            if v.is_infinite() {
                break;
            }
        }
    }
    Ok(ModulusValue {
        delta,
        omega,
        arg_h,
        h_points: hp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCurve {
    pub lambda: f64,
    pub h_points: usize,
    pub boundary: BoundaryMode,
    /// `(δ, ω)` in increasing `δ`.
    pub points: Vec<(f64, f64)>,
}

/// `2⁻ʲ` for `j = 1..=count`, increasing.
pub fn dyadic_deltas(count: u32) -> Vec<f64> {
    (1..=count).rev().map(|j| 0.5f64.powi(j as i32)).collect()
}

/// Parses `dyadic:<count>` or a comma-separated list.
pub fn parse_deltas(spec: &str) -> Result<Vec<f64>> {
    if let Some(count) = spec.strip_prefix("dyadic:") {
        let count: u32 = count
            .parse()
            .map_err(|_| Error::parse("deltas", spec, "bad dyadic count"))?;
        return Ok(dyadic_deltas(count));
    }
    let mut out = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse("deltas", spec, format!("bad number {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(f64::total_cmp);
    Ok(out)
}

pub fn curve(
    phi: &PhiFunction,
    f: &Signal,
    lambda: f64,
    deltas: &[f64],
    domain: &Domain,
    mode: BoundaryMode,
    res: &Resolution,
) -> Result<SmoothnessCurve> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let points = sorted
        .iter()
        .map(|&d| modulus(phi, f, lambda, d, domain, mode, res).map(|m| (d, m.omega)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SmoothnessCurve {
        lambda,
        h_points: res.h_points,
        boundary: mode,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    /// First ladder entry for which `ω(λf, δ_min) < tolerance`.
    pub lambda: Option<f64>,
    pub delta_min: f64,
    pub tolerance: f64,
    pub omega_at_min: f64,
    pub curve: Option<SmoothnessCurve>,
}

pub const VANISHING_DELTA_MIN: f64 = 1.0 / 65536.0;

pub fn vanishing_check(
    phi: &PhiFunction,
    f: &Signal,
    domain: &Domain,
    ladder: &[f64],
    tolerance: f64,
    res: &Resolution,
) -> Result<VanishingReport> {
    let mut last = f64::INFINITY;
    for &lambda in ladder {
        let m = modulus(
            phi,
            f,
            lambda,
            VANISHING_DELTA_MIN,
            domain,
            BoundaryMode::default(),
            res,
        )?;
        last = m.omega;
        if m.omega < tolerance {
            let c = curve(
                phi,
                f,
                lambda,
                &dyadic_deltas(16),
                domain,
                BoundaryMode::default(),
                res,
            )?;
            return Ok(VanishingReport {
                lambda: Some(lambda),
                delta_min: VANISHING_DELTA_MIN,
                tolerance,
                omega_at_min: m.omega,
                curve: Some(c),
            });
        }
    }
    Ok(VanishingReport {
        lambda: None,
        delta_min: VANISHING_DELTA_MIN,
        tolerance,
        omega_at_min: last,
        curve: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzFit {
    /// Fitted exponent clamped to `(0, 1]`.
    pub nu: f64,
    pub raw_slope: f64,
    pub constant: f64,
    pub residual: f64,
    pub delta_range: (f64, f64),
    pub points: usize,
}

/// Log-log slope of ω against δ over the smallest-δ half of the curve.
pub fn fit_lipschitz(curve: &SmoothnessCurve) -> Result<LipschitzFit> {
    let positive: Vec<(f64, f64)> = curve
        .points
        .iter()
        .copied()
        .filter(|(d, w)| *d > 0.0 && *w > 0.0 && w.is_finite())
        .collect();
    if positive.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 positive points, got {} (signal locally constant at this resolution?)",
            positive.len()
        )));
    }
    let take = positive.len().div_ceil(2).max(4);
    let used = &positive[..take];
    let xs: Vec<f64> = used.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1).collect();
    let fit = log_log_fit(&xs, &ys)?;
    Ok(LipschitzFit {
        nu: fit.slope.clamp(f64::EPSILON, 1.0),
        raw_slope: fit.slope,
        constant: fit.intercept.exp(),
        residual: fit.residual,
        delta_range: (xs[0], xs[xs.len() - 1]),
        points: used.len(),
    })
}

/// Dyadic bandwidths `2⁻¹ … 2⁻¹²`.
pub fn default_bandwidths() -> Vec<f64> {
    (1..=12).map(|j| 0.5f64.powi(j)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub bandwidth: Option<f64>,
    /// `I^φ[λ(f - g)]`.
    pub modular: f64,
    /// `‖g'‖_∞` measured on the derivative grid.
    pub deriv_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFunctionalEstimate {
    pub lambda: f64,
    pub delta: f64,
    /// Minimum of the objective over the family: an upper bound of 𝒦.
    pub value: f64,
    pub witness: Candidate,
    pub phi_of_deriv: f64,
}

/// Smoothing family for one `(f, λ)`; the objective is then cheap for any δ.
#[derive(Debug, Clone)]
pub struct CandidateFamily {
    phi: PhiFunction,
    lambda: f64,
    interval: (f64, f64),
    candidates: Vec<Candidate>,
    pub derivative_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyOptions {
    pub bandwidths: Vec<f64>,
    pub include_zero: bool,
    /// Use `g = f` when the signal declares a derivative.
    pub include_self: bool,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions {
            bandwidths: default_bandwidths(),
            include_zero: true,
            include_self: true,
        }
    }
}

impl CandidateFamily {
    /// Candidates: `g ≡ 0`, `g = f` (if `f ∈ C¹` is declared) and
    /// `g_h = f̃ * (hat of half-width h)` where `f̃(y) = f(clamp(y, a, b))`.
    /// Each `g_h` is `C¹` and nonnegative, with
    /// `g_h'(x) = h⁻² [∫_x^{x+h} f̃ - ∫_{x-h}^x f̃]`.
    pub fn build(
        phi: &PhiFunction,
        f: &Signal,
        lambda: f64,
        domain: &Domain,
        options: &FamilyOptions,
        res: &Resolution,
    ) -> Result<Self> {
        let Domain::Interval { a, b } = *domain else {
            return Err(Error::InvalidInput(
                "the K-functional is defined on a compact interval".into(),
            ));
        };
        if !f.nonneg {
            return Err(Error::Contract(format!(
                "signal {} is not declared nonnegative; subtract its lower bound first",
                f.name
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let grid = res.derivative_grid.max(16);
        let step = (b - a) / grid as f64;
        let quad = &res.quad;
        let breaks_ab: Vec<f64> = f.breaks_in(a, b).collect();
        let mut candidates = Vec::new();
        if options.include_zero {
            let m = modular_fn(
                phi,
                lambda,
                &|x| f.value(x),
                &normalize_breaks(&breaks_ab, a, b),
                quad,
            );
            candidates.push(Candidate {
                id: "zero".into(),
                bandwidth: None,
                modular: m.value,
                deriv_norm: 0.0,
            });
        }
        if options.include_self {
            if let Some(d) = f.derivative() {
                let e = grid_extremum(&|x| d(x).abs(), a, b, step, Sense::Max, res.exec);
                candidates.push(Candidate {
                    id: "self".into(),
                    bandwidth: None,
                    modular: 0.0,
                    deriv_norm: e.value,
                });
            }
        }
        let smooth = res.exec.map_slice(&options.bandwidths, |&h| {
            let s = Steklov { f, a, b, h };
            let mut pts: Vec<f64> = breaks_ab.iter().flat_map(|&p| [p - h, p, p + h]).collect();
            pts.extend([a + h, b - h]);
            let breaks = normalize_breaks(&pts, a, b);
            let m = modular_fn(phi, lambda, &|x| f.value(x) - s.value(x), &breaks, quad);
            let dn = |x: f64| s.derivative(x).abs();
            let e = grid_extremum(&dn, a, b, step, Sense::Max, Execution::Sequential);
            // Kinks of g' sit at the breakpoints of f shifted by 0 and ±h.
            let at_kinks = breaks.iter().map(|&x| dn(x)).fold(0.0, f64::max);
            Candidate {
                id: format!("steklov:{h}"),
                bandwidth: Some(h),
                modular: m.value,
                deriv_norm: e.value.max(at_kinks),
            }
        });
        candidates.extend(smooth);
        if candidates.is_empty() {
            return Err(Error::EmptyFamily);
        }
        Ok(CandidateFamily {
            phi: phi.clone(),
            lambda,
            interval: (a, b),
            candidates,
            derivative_grid: grid,
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Objective `I^φ[λ(f - g)] + δ φ(‖g'‖_∞)` of one candidate.
    pub fn objective(&self, c: &Candidate, delta: f64) -> f64 {
        let penalty = self.phi.eval(c.deriv_norm);
        if penalty == 0.0 {
            c.modular
        } else {
            c.modular + delta * penalty
        }
    }

    pub fn estimate(&self, delta: f64) -> Result<KFunctionalEstimate> {
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "delta must be positive, got {delta}"
            )));
        }
        let mut best: Option<(f64, &Candidate)> = None;
        for c in &self.candidates {
            let v = self.objective(c, delta);
            if best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, c));
            }
        }
        let (value, witness) = best.ok_or(Error::EmptyFamily)?;
        Ok(KFunctionalEstimate {
            lambda: self.lambda,
            delta,
            value,
            phi_of_deriv: self.phi.eval(witness.deriv_norm),
            witness: witness.clone(),
        })
    }
}

/// One-shot K-functional estimate with the default family.
pub fn k_functional(
    phi: &PhiFunction,
    f: &Signal,
    lambda: f64,
    delta: f64,
    domain: &Domain,
    res: &Resolution,
) -> Result<KFunctionalEstimate> {
    CandidateFamily::build(phi, f, lambda, domain, &FamilyOptions::default(), res)?.estimate(delta)
}

/// Hat-kernel smoothing of the clamped extension of `f`.
pub struct Steklov<'a> {
    pub f: &'a Signal,
    pub a: f64,
    pub b: f64,
    pub h: f64,
}

impl Steklov<'_> {
    fn ext(&self, y: f64) -> f64 {
        self.f.value(y.clamp(self.a, self.b))
    }

    /// `∫_lo^hi f̃`, one Kronrod pass per smooth piece.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut pts: Vec<f64> = self.f.breaks_in(lo, hi).collect();
        pts.extend([self.a, self.b]);
        normalize_breaks(&pts, lo, hi)
            .windows(2)
            .map(|w| gk15(&|y| self.ext(y), w[0], w[1]).0)
            .sum()
    }

    pub fn value(&self, x: f64) -> f64 {
        let h = self.h;
        let w = |y: f64| (h - (y - x).abs()) / (h * h);
        let mut pts: Vec<f64> = self.f.breaks_in(x - h, x + h).collect();
        pts.extend([x, self.a, self.b]);
        normalize_breaks(&pts, x - h, x + h)
            .windows(2)
            .map(|s| gk15(&|y| self.ext(y) * w(y), s[0], s[1]).0)
            .sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.integral(x, x + self.h) - self.integral(x - self.h, x)) / (self.h * self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res() -> Resolution {
        Resolution::default().with_exec(Execution::Sequential)
    }

    #[test]
    fn modulus_of_indicator_is_two_delta() {
        let phi = PhiFunction::parse("p:1").unwrap();
        let f = Signal::indicator(0.0, 1.0).unwrap();
        let dom = Domain::real_line(8.0).unwrap();
        for d in [0.5, 0.125, 1.0 / 256.0] {
            let m = modulus(&phi, &f, 1.0, d, &dom, BoundaryMode::Overlap, &res()).unwrap();
            assert!((m.omega - 2.0 * d).abs() < 1e-9, "{d}: {}", m.omega);
        }
        assert_eq!(
            modulus(&phi, &f, 1.0, 0.0, &dom, BoundaryMode::Overlap, &res())
                .unwrap()
                .omega,
            0.0
        );
    }

    #[test]
    fn hat_power_two_modulus() {
        // ∫|hat(x+h) - hat(x)|² dx = 2h² - h³ for 0 ≤ h ≤ 1.
        let phi = PhiFunction::parse("p:2").unwrap();
        let dom = Domain::real_line(8.0).unwrap();
        let m = modulus(
            &phi,
            &Signal::hat(),
            1.0,
            0.25,
            &dom,
            BoundaryMode::Overlap,
            &res(),
        )
        .unwrap();
        let h = 0.25f64;
        assert!((m.omega - (2.0 * h * h - h.powi(3))).abs() < 1e-9);
    }

    #[test]
    fn interval_boundary_modes() {
        let phi = PhiFunction::parse("p:1").unwrap();
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let one = Signal::constant(1.0);
        let overlap = shift_modular(
            &phi,
            &one,
            1.0,
            0.25,
            &dom,
            BoundaryMode::Overlap,
            &QuadSpec::default(),
        );
        assert!(overlap.value.abs() < 1e-15);
        let zero = shift_modular(
            &phi,
            &one,
            1.0,
            0.25,
            &dom,
            BoundaryMode::ZeroExtension,
            &QuadSpec::default(),
        );
        assert!((zero.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_fit_of_indicator() {
        let phi = PhiFunction::parse("p:2").unwrap();
        let f = Signal::indicator(0.0, 1.0).unwrap();
        let c = curve(
            &phi,
            &f,
            1.0,
            &dyadic_deltas(10),
            &Domain::real_line(8.0).unwrap(),
            BoundaryMode::Overlap,
            &res(),
        )
        .unwrap();
        let fit = fit_lipschitz(&c).unwrap();
        assert!((fit.nu - 1.0).abs() < 1e-6);
        assert!((fit.constant - 2.0).abs() < 1e-6);
    }

    #[test]
    fn flat_curve_cannot_be_fitted() {
        let c = SmoothnessCurve {
            lambda: 1.0,
            h_points: 4,
            boundary: BoundaryMode::Overlap,
            points: vec![(0.1, 0.0), (0.2, 0.0), (0.3, 0.0), (0.4, 0.0)],
        };
        assert!(fit_lipschitz(&c).is_err());
    }

    #[test]
    fn steklov_smoothing_of_step() {
        let f = Signal::indicator(0.25, 0.75).unwrap();
        let s = Steklov {
            f: &f,
            a: 0.0,
            b: 1.0,
            h: 0.1,
        };
        assert!((s.value(0.5) - 1.0).abs() < 1e-14);
        assert!((s.value(0.25) - 0.5).abs() < 1e-14);
        assert!((s.derivative(0.25) - 10.0).abs() < 1e-12);
        assert!(s.value(0.1).abs() < 1e-15);
    }

    #[test]
    fn k_functional_of_zero_and_smooth_signals() {
        let phi = PhiFunction::parse("p:1").unwrap();
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let z = k_functional(&phi, &Signal::zero(), 1.0, 0.1, &dom, &res()).unwrap();
        assert_eq!(z.value, 0.0);
        let s = k_functional(&phi, &Signal::sin2(), 1.0, 1e-6, &dom, &res()).unwrap();
        assert!(s.value <= 1e-6 * std::f64::consts::PI + 1e-12);
        assert!(matches!(
            k_functional(&phi, &Signal::sine(), 1.0, 0.1, &dom, &res()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn k_functional_of_a_window_is_bracketed() {
        // Two unit jumps. Any g with slope at most L leaves at least 1/(4L) of L¹
        // error per jump, so 𝒦 ≥ min_L (1/(2L) + δL) = √(2δ), which linear ramps
        // attain. The hat-smoothing family costs about 2√(2δ/3) < 2√δ.
        let phi = PhiFunction::parse("p:1").unwrap();
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let f = Signal::indicator(0.25, 0.75).unwrap();
        for delta in [1e-2, 1e-3, 1e-4, 1e-5] {
            let k = k_functional(&phi, &f, 1.0, delta, &dom, &res()).unwrap().value;
            let (lo, hi) = ((2.0 * delta).sqrt(), 2.0 * delta.sqrt());
            assert!(k >= lo - 1e-9 && k <= hi, "delta = {delta}: {k} not in [{lo}, {hi}]");
        }
    }
}
