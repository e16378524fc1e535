//! φ-functions, domains and the modular functional `I^φ[λ f] = ∫_Ω φ(λ|f|)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::RealFn;
use crate::par::Execution;
use crate::quad::{integrate_breaks, integrate_pieces, normalize_breaks, QuadResult, QuadSpec};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainFlavor {
    RealLine,
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiFamily {
    Power { p: f64 },
    Zygmund { alpha: f64, beta: f64 },
    Exponential { gamma: f64 },
    Custom { name: String },
}

/// Record of a numerical (φ1)/(φ2)/convexity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiCertificate {
    pub passed: bool,
    pub u_min: f64,
    pub u_max: f64,
    pub points: usize,
    pub failure: Option<String>,
}

#[derive(Clone)]
pub struct PhiFunction {
    pub family: PhiFamily,
    eval: RealFn,
    certificate: Option<PhiCertificate>,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiFunction")
            .field("family", &self.family)
            .field("certificate", &self.certificate)
            .finish()
    }
}

impl fmt::Display for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            PhiFamily::Power { p } => write!(f, "p:{p}"),
            PhiFamily::Zygmund { alpha, beta } => write!(f, "zygmund:{alpha}:{beta}"),
            PhiFamily::Exponential { gamma } => write!(f, "exp:{gamma}"),
            PhiFamily::Custom { name } => write!(f, "{name}"),
        }
    }
}

impl PhiFunction {
    /// `u^p`.
    pub fn power(p: f64) -> Self {
        PhiFunction::from_family(PhiFamily::Power { p }, Arc::new(move |u: f64| u.powf(p)))
    }

    /// `u^α log^β(u + e)`.
    pub fn zygmund(alpha: f64, beta: f64) -> Self {
        PhiFunction::from_family(
            PhiFamily::Zygmund { alpha, beta },
            Arc::new(move |u: f64| u.powf(alpha) * (u + std::f64::consts::E).ln().powf(beta)),
        )
    }

    /// `e^{u^γ} - 1`.
    pub fn exponential(gamma: f64) -> Self {
        PhiFunction::from_family(
            PhiFamily::Exponential { gamma },
            Arc::new(move |u: f64| u.powf(gamma).exp_m1()),
        )
    }

    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhiFunction::from_family(PhiFamily::Custom { name: name.into() }, Arc::new(eval))
    }

    fn from_family(family: PhiFamily, eval: RealFn) -> Self {
        PhiFunction {
            family,
            eval,
            certificate: None,
        }
    }

    /// `p:<p>`, `zygmund:<α>:<β>` or `exp:<γ>`; the result is certified.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse("phi", spec, format!("bad number {s:?}")))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        let phi = match parts.as_slice() {
            ["p", p] => PhiFunction::power(num(p)?),
            ["zygmund", a, b] => PhiFunction::zygmund(num(a)?, num(b)?),
            ["exp", g] => PhiFunction::exponential(num(g)?),
            _ => {
                return Err(Error::parse(
                    "phi",
                    spec,
                    "expected p:<p>, zygmund:<a>:<b> or exp:<g>",
                ))
            }
        };
        phi.certified(50)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        (self.eval)(u)
    }

    pub fn certificate(&self) -> Option<&PhiCertificate> {
        self.certificate.as_ref()
    }

    /// Runs [`check_phi_conditions`] and keeps the certificate, failing when it does not pass.
    pub fn certified(mut self, points_per_decade: usize) -> Result<Self> {
        let cert = check_phi_conditions(&self, points_per_decade);
        if let Some(reason) = &cert.failure {
            return Err(Error::PhiRejected {
                phi: self.to_string(),
                reason: reason.clone(),
            });
        }
        self.certificate = Some(cert);
        Ok(self)
    }
}

/// Checks `φ(0) = 0`, positivity, monotonicity, unbounded growth and
/// convexity (non-decreasing secant slopes) on a geometric grid over
/// `[10⁻⁶, 10⁶]` with 0 prepended. Grid points where `φ` overflows end the check.
pub fn check_phi_conditions(phi: &PhiFunction, points_per_decade: usize) -> PhiCertificate {
    let (u_min, u_max) = (1e-6_f64, 1e6_f64);
    let ppd = points_per_decade.max(1);
    let count = 12 * ppd + 1;
    let mut us = vec![0.0];
    us.extend((0..count).map(|i| u_min * 10f64.powf(i as f64 / ppd as f64)));
    let vs: Vec<f64> = us.iter().map(|&u| phi.eval(u)).collect();
    let fail = |msg: String| PhiCertificate {
        passed: false,
        u_min,
        u_max,
        points: us.len(),
        failure: Some(msg),
    };
    if vs[0] != 0.0 {
        return fail(format!("phi(0) = {} is not 0", vs[0]));
    }
    let finite = vs.iter().take_while(|v| v.is_finite()).count();
    if let Some(i) = (1..finite).find(|&i| !(vs[i] > 0.0)) {
        return fail(format!("phi({}) = {} is not positive", us[i], vs[i]));
    }
    if let Some(i) = (1..finite).find(|&i| vs[i] < vs[i - 1]) {
        return fail(format!("phi decreases between {} and {}", us[i - 1], us[i]));
    }
    if finite == vs.len() && !(vs[finite - 1] >= 1e3 * phi.eval(1.0)) {
        return fail("phi does not grow without bound on the tested range".into());
    }
    let slopes: Vec<f64> = (1..finite)
        .map(|i| (vs[i] - vs[i - 1]) / (us[i] - us[i - 1]))
        .collect();
    for w in slopes.windows(2).enumerate() {
        let (i, pair) = w;
        if !pair[1].is_finite() {
            break;
        }
        let tol = 1e-9 * pair[0].abs().max(pair[1].abs()) + 1e-300;
        if pair[1] < pair[0] - tol {
            return fail(format!("convexity fails near u = {}", us[i + 1]));
        }
    }
    PhiCertificate {
        passed: true,
        u_min,
        u_max,
        points: us.len(),
        failure: None,
    }
}

/// `Ω = [-R, R]` standing in for ℝ, or a compact interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    RealLine { half_width: f64 },
    Interval { a: f64, b: f64 },
}

impl Domain {
    pub fn real_line(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "truncation half-width must be positive, got {half_width}"
            )));
        }
        Ok(Domain::RealLine { half_width })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "interval needs finite a < b, got [{a}, {b}]"
            )));
        }
        Ok(Domain::Interval { a, b })
    }

    /// `real`, `real:R=8`, `real:8` or `interval:a:b`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse("domain", spec, format!("bad number {s:?}")))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["real"] => Domain::real_line(8.0),
            ["real", r] => {
                Domain::real_line(num(r.trim_start_matches("R=").trim_start_matches("r="))?)
            }
            ["interval", a, b] => Domain::interval(num(a)?, num(b)?),
            _ => Err(Error::parse(
                "domain",
                spec,
                "expected real[:R=<r>] or interval:<a>:<b>",
            )),
        }
    }

    pub fn flavor(&self) -> DomainFlavor {
        match self {
            Domain::RealLine { .. } => DomainFlavor::RealLine,
            Domain::Interval { .. } => DomainFlavor::Compact,
        }
    }

    /// Integration window.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Domain::RealLine { half_width } => (-half_width, half_width),
            Domain::Interval { a, b } => (a, b),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::RealLine { half_width } => write!(f, "real:R={half_width}"),
            Domain::Interval { a, b } => write!(f, "interval:{a}:{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularReport {
    /// `f64::INFINITY` when the quadrature did not converge.
    pub value: f64,
    pub lambda: f64,
    pub error: f64,
    pub in_space: bool,
    /// Set when part of the signal lies outside the truncation window.
    pub disclaimer: Option<String>,
}

impl ModularReport {
    fn from_quad(r: QuadResult, lambda: f64) -> Self {
        if r.converged {
            ModularReport {
                value: r.value.max(0.0),
                lambda,
                error: r.error,
                in_space: true,
                disclaimer: None,
            }
        } else {
            ModularReport {
                value: f64::INFINITY,
                lambda,
                error: f64::INFINITY,
                in_space: false,
                disclaimer: None,
            }
        }
    }
}

/// `∫ φ(λ|g|)` over the partition `breaks` (one global adaptive run).
pub fn modular_fn<G>(
    phi: &PhiFunction,
    lambda: f64,
    g: &G,
    breaks: &[f64],
    quad: &QuadSpec,
) -> ModularReport
where
    G: Fn(f64) -> f64 + ?Sized,
{
    let integrand = |x: f64| phi.eval(lambda * g(x).abs());
    ModularReport::from_quad(integrate_breaks(&integrand, breaks, quad), lambda)
}

/// Same as [`modular_fn`] but with independent runs per piece, suited to
/// long partitions; the result does not depend on `exec`.
pub fn modular_fn_pieces<G>(
    phi: &PhiFunction,
    lambda: f64,
    g: &G,
    breaks: &[f64],
    quad: &QuadSpec,
    exec: Execution,
) -> ModularReport
where
    G: Fn(f64) -> f64 + Sync + ?Sized,
{
    let integrand = |x: f64| phi.eval(lambda * g(x).abs());
    ModularReport::from_quad(integrate_pieces(&integrand, breaks, quad, exec), lambda)
}

/// `I^φ[λ f]` on `domain`. On the real line the integral runs over the part
/// of the support inside `[-R, R]`; a signal with nonzero baseline is not
/// integrable there.
pub fn modular(
    phi: &PhiFunction,
    f: &Signal,
    lambda: f64,
    domain: &Domain,
    quad: &QuadSpec,
) -> Result<ModularReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let (lo, hi) = domain.bounds();
    let mut disclaimer = None;
    let (lo, hi) = match (domain, f.support) {
        (Domain::RealLine { .. }, support) => {
            if phi.eval(lambda * f.baseline.abs()) > 0.0 {
                return Ok(ModularReport {
                    value: f64::INFINITY,
                    lambda,
                    error: f64::INFINITY,
                    in_space: false,
                    disclaimer: Some("nonzero baseline on the real line".into()),
                });
            }
            match support {
                Some((s0, s1)) => {
                    if s0 < lo || s1 > hi {
                        disclaimer = Some(format!("support [{s0}, {s1}] exceeds the window [{lo}, {hi}]; tail not bounded"));
                    }
                    (s0.max(lo), s1.min(hi))
                }
                None => {
                    disclaimer = Some(format!(
                        "no declared support; integrated over [{lo}, {hi}] only"
                    ));
                    (lo, hi)
                }
            }
        }
        (Domain::Interval { .. }, _) => (lo, hi),
    };
    if hi <= lo {
        return Ok(ModularReport {
            value: 0.0,
            lambda,
            error: 0.0,
            in_space: true,
            disclaimer,
        });
    }
    let pts: Vec<f64> = f.breaks_in(lo, hi).collect();
    let mut report = modular_fn(
        phi,
        lambda,
        &|x| f.value(x),
        &normalize_breaks(&pts, lo, hi),
        quad,
    );
    report.disclaimer = disclaimer;
    Ok(report)
}

/// `2⁻ʲ`, `j = 0..=20`.
pub fn default_ladder() -> Vec<f64> {
    (0..=20).map(|j| 0.5f64.powi(j)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScan {
    /// First ladder entry with a finite modular.
    pub lambda: Option<f64>,
    pub trace: Vec<(f64, f64)>,
}

impl LambdaScan {
    pub fn certified(&self, signal: &str) -> Result<f64> {
        self.lambda.ok_or_else(|| Error::NotInSpace {
            signal: signal.to_string(),
        })
    }
}

/// Walks a decreasing ladder until the modular is finite.
pub fn scan_lambda(
    phi: &PhiFunction,
    f: &Signal,
    domain: &Domain,
    ladder: &[f64],
    quad: &QuadSpec,
) -> Result<LambdaScan> {
    if ladder.is_empty()
        || ladder.iter().any(|l| !(*l > 0.0))
        || ladder.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidInput(
            "lambda ladder must be positive and strictly decreasing".into(),
        ));
    }
    let mut trace = Vec::new();
    for &lambda in ladder {
        let r = modular(phi, f, lambda, domain, quad)?;
        trace.push((lambda, r.value));
        if r.in_space {
            return Ok(LambdaScan {
                lambda: Some(lambda),
                trace,
            });
        }
    }
    Ok(LambdaScan {
        lambda: None,
        trace,
    })
}

/// `φ(⋁ A_k) ≤ ⋁ φ(2 A_k)` for nonnegative `A_k`, up to `tol` (relative).
pub fn convex_sup_holds(phi: &PhiFunction, values: &[f64], tol: f64) -> bool {
    let sup = values.iter().copied().fold(0.0, f64::max);
    let lhs = phi.eval(sup);
    let rhs = values
        .iter()
        .map(|&a| phi.eval(2.0 * a))
        .fold(0.0, f64::max);
    lhs <= rhs + tol * rhs.abs().max(1.0)
}
