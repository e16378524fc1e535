//! Generalized kernels: evaluation, norms, window infima, generalized
//! absolute moments and the tail-mass condition used by the rate estimates.
//!
//! A [`KernelDef`] is the bare evaluator plus metadata (support, decay
//! envelope, known kinks). [`Kernel`] wraps a definition together with the
//! constants every operator and bound needs, computed once at construction.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::fit::log_log_fit;
use crate::optimize::{grid_extremum, Extremum, Sense};
use crate::orlicz::DomainFlavor;
use crate::par::Execution;
use crate::quad::{integrate_breaks, normalize_breaks, QuadSpec};
use crate::settings::{Resolution, A_CHI_MIN};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tail envelope `|χ(u)| ≤ constant · |u|^(-exponent)` valid for every `u ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub exponent: f64,
    pub constant: f64,
}

/// Closed form of `∫_{|u|>T} |χ(u)| du`, usable for `T ≥ valid_from`.
#[derive(Clone)]
pub struct TailMass {
    pub mass: RealFn,
    pub valid_from: f64,
}

#[derive(Clone)]
pub struct KernelDef {
    pub name: String,
    eval: RealFn,
    pub support: Option<(f64, f64)>,
    pub decay: Option<Decay>,
    /// Points where the kernel is not smooth; used to seed quadrature.
    pub breakpoints: Vec<f64>,
    pub tail_mass: Option<TailMass>,
}

impl fmt::Debug for KernelDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelDef")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("decay", &self.decay)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub sup_norm: f64,
    /// Gain of the refinement pass over the best grid value.
    pub sup_error: f64,
    pub l1_norm: f64,
    pub l1_error: f64,
    pub sup_grid_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub beta: f64,
    pub value: f64,
    /// Point `x ∈ [0,1]` where the supremum was attained.
    pub arg: f64,
    /// Shifts `|k| ≤ k_window` were scanned.
    pub k_window: i64,
    pub grid_step: f64,
    /// `β` equals the decay exponent, so the truncation cannot be certified by the envelope.
    pub at_decay_margin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi4Report {
    pub alpha: f64,
    /// `(n, n ∫_{|y|>n^-α} |χ(ny)| dy)` for every sampled `n`.
    pub samples: Vec<(u32, f64)>,
    #[serde(rename = "M")]
    pub m: f64,
    /// `f64::INFINITY` when the tails vanish identically (compact support).
    pub gamma: f64,
    pub n_threshold: u32,
    pub gamma_analytic: Option<f64>,
    pub fit_residual: f64,
}

impl Chi4Report {
    /// `M n^-γ`, reading `n^-∞` as zero.
    pub fn tail_bound(&self, n: u32) -> f64 {
        if self.gamma.is_infinite() {
            0.0
        } else {
            self.m * (n as f64).powf(-self.gamma)
        }
    }
}

impl KernelDef {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        KernelDef {
            name: name.into(),
            eval: Arc::new(eval),
            support: None,
            decay: None,
            breakpoints: Vec::new(),
            tail_mass: None,
        }
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = Some((lo, hi));
        self
    }

    pub fn with_decay(mut self, exponent: f64, constant: f64) -> Self {
        self.decay = Some(Decay { exponent, constant });
        self
    }

    pub fn with_breakpoints(mut self, points: Vec<f64>) -> Self {
        self.breakpoints = points;
        self
    }

    pub fn with_tail_mass(
        mut self,
        valid_from: f64,
        mass: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.tail_mass = Some(TailMass {
            mass: Arc::new(mass),
            valid_from,
        });
        self
    }

    /// Fejér kernel `F(x) = ½ sinc²(x/2)` with `sinc(t) = sin(πt)/(πt)`.
    pub fn fejer() -> Self {
        KernelDef::new("fejer", fejer_value)
            .with_decay(2.0, 2.0 / (PI * PI))
            .with_tail_mass(16.0, fejer_tail_mass)
    }

    /// Central B-spline of the given order (`order = 2` is the hat `max(1-|x|, 0)`).
    pub fn bspline(order: u32) -> Result<Self> {
        if !(2..=12).contains(&order) {
            return Err(Error::InvalidInput(format!(
                "B-spline order must be in 2..=12, got {order}"
            )));
        }
        let half = order as f64 / 2.0;
        let knots = (0..=order).map(|j| -half + j as f64).collect();
        Ok(
            KernelDef::new(format!("bspline:{order}"), move |x| bspline_value(order, x))
                .with_support(-half, half)
                .with_breakpoints(knots),
        )
    }

    /// Constant `value` on `[-half_width, half_width]`, zero elsewhere.
    pub fn rectangle(half_width: f64, value: f64) -> Self {
        KernelDef::new(format!("box:{half_width}:{value}"), move |x| {
            if x.abs() <= half_width {
                value
            } else {
                0.0
            }
        })
        .with_support(-half_width, half_width)
        .with_breakpoints(vec![-half_width, half_width])
    }

    /// Piecewise-linear interpolation of `(xs, ys)`, zero outside `[xs[0], xs[last]]`.
    pub fn tabulated(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidInput(
                "a tabulated kernel needs at least two (x, value) rows".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "tabulated kernel abscissae must be finite and strictly increasing".into(),
            ));
        }
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        let table_x = xs.clone();
        let eval = move |x: f64| {
            if x < lo || x > hi {
                return 0.0;
            }
            let i = table_x
                .partition_point(|t| *t <= x)
                .clamp(1, table_x.len() - 1);
            let (x0, x1) = (table_x[i - 1], table_x[i]);
            let t = (x - x0) / (x1 - x0);
            ys[i - 1] + t * (ys[i] - ys[i - 1])
        };
        Ok(KernelDef::new(name, eval)
            .with_support(lo, hi)
            .with_breakpoints(xs))
    }

    /// Reads `x,value` rows (an optional header line is skipped).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (xs, ys) = read_xy_csv(path)?;
        KernelDef::tabulated(format!("file:{}", path.display()), xs, ys)
    }

    /// Registry lookup: `fejer`, `bspline:<order>`, `box`, `box:<half-width>:<value>`, `file:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(path) = spec.strip_prefix("file:") {
            return KernelDef::from_csv(path);
        }
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["fejer"] => Ok(KernelDef::fejer()),
            ["bspline", order] => {
                let order = order
                    .parse()
                    .map_err(|_| Error::parse("kernel", spec, "bad B-spline order"))?;
                KernelDef::bspline(order)
            }
            ["box"] => Ok(KernelDef::rectangle(1.0, 1.0)),
            ["box", w, v] => {
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::parse("kernel", spec, "bad half-width"))?;
                let v: f64 = v
                    .parse()
                    .map_err(|_| Error::parse("kernel", spec, "bad value"))?;
                Ok(KernelDef::rectangle(w, v))
            }
            _ => Err(Error::parse(
                "kernel",
                spec,
                "expected fejer, bspline:<order>, box[:<w>:<v>] or file:<path>",
            )),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        ensure_finite("kernel argument", x)?;
        Ok(self.value(x))
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Largest `|u|` inside the support, if compact.
    pub fn support_radius(&self) -> Option<f64> {
        self.support.map(|(lo, hi)| lo.abs().max(hi.abs()))
    }

    fn symmetric_window(&self, grid_step: f64, exec: Execution) -> Result<(f64, Extremum)> {
        if let Some(r) = self.support_radius() {
            let e = grid_extremum(&|u| self.value(u).abs(), -r, r, grid_step, Sense::Max, exec);
            return Ok((r, e));
        }
        let Some(decay) = self.decay else {
            return Err(Error::Chi1 {
                kernel: self.name.clone(),
                reason: "neither compact support nor a decay envelope is declared".into(),
            });
        };
        let mut w = 4.0;
        loop {
            let e = grid_extremum(&|u| self.value(u).abs(), -w, w, grid_step, Sense::Max, exec);
            if decay.constant * w.powf(-decay.exponent) <= e.value {
                return Ok((w, e));
            }
            if w > 1e6 {
                return Err(Error::Chi1 {
                    kernel: self.name.clone(),
                    reason: "supremum window did not close".into(),
                });
            }
            w *= 2.0;
        }
    }

    /// `‖χ‖_∞` by grid search plus refinement, `‖χ‖₁` by adaptive quadrature
    /// with the tail closed from the decay metadata.
    pub fn compute_norms(
        &self,
        grid_step: f64,
        truncation: f64,
        quad: &QuadSpec,
        exec: Execution,
    ) -> Result<Norms> {
        let (_, sup) = self.symmetric_window(grid_step, exec)?;
        let abs = |u: f64| self.value(u).abs();
        let (l1_norm, l1_error) = if let Some((lo, hi)) = self.support {
            let r = integrate_breaks(&abs, &normalize_breaks(&self.breakpoints, lo, hi), quad);
            (r.value, r.error)
        } else {
            let decay = self.decay.ok_or_else(|| Error::Chi1 {
                kernel: self.name.clone(),
                reason: "divergent tail: no decay envelope".into(),
            })?;
            if decay.exponent <= 1.0 {
                return Err(Error::Chi1 {
                    kernel: self.name.clone(),
                    reason: format!(
                        "decay exponent {} ≤ 1 does not give an integrable tail",
                        decay.exponent
                    ),
                });
            }
            let t = truncation;
            let core = self.window_mass(t, quad);
            let bound =
                2.0 * decay.constant * t.powf(1.0 - decay.exponent) / (decay.exponent - 1.0);
            match &self.tail_mass {
                Some(tm) if t >= tm.valid_from => (core.0 + (tm.mass)(t), core.1),
                _ => (core.0 + 0.5 * bound, core.1 + 0.5 * bound),
            }
        };
        Ok(Norms {
            sup_norm: sup.value,
            sup_error: sup.value - sup.grid_value,
            l1_norm,
            l1_error,
            sup_grid_step: sup.grid_step,
        })
    }

    /// `∫_{-t}^{t} |χ|` with breakpoints at the integers and known kinks.
    fn window_mass(&self, t: f64, quad: &QuadSpec) -> (f64, f64) {
        let m = t.floor() as i64;
        let mut pts: Vec<f64> = (-m..=m).map(|k| k as f64).collect();
        pts.extend(self.breakpoints.iter().copied());
        let r = integrate_breaks(
            &|u: f64| self.value(u).abs(),
            &normalize_breaks(&pts, -t, t),
            quad,
        );
        (r.value, r.error)
    }

    /// Infimum of `χ` on `[-1/2, 1/2]` (real line) or `[-3/2, 3/2]` (compact interval).
    pub fn infimum_on_window(
        &self,
        flavor: DomainFlavor,
        grid_step: f64,
        exec: Execution,
    ) -> Extremum {
        let r = match flavor {
            DomainFlavor::RealLine => 0.5,
            DomainFlavor::Compact => 1.5,
        };
        grid_extremum(&|u| self.value(u), -r, r, grid_step, Sense::Min, exec)
    }

    /// `a_chi` for `flavor`, rejecting the kernel when it is not above [`A_CHI_MIN`].
    pub fn certify_chi2(
        &self,
        flavor: DomainFlavor,
        grid_step: f64,
        exec: Execution,
    ) -> Result<f64> {
        let a = self.infimum_on_window(flavor, grid_step, exec).value;
        if a > A_CHI_MIN {
            Ok(a)
        } else {
            Err(Error::Chi2 {
                kernel: self.name.clone(),
                flavor,
                a_chi: a,
            })
        }
    }

    /// `m_β(χ) = sup_{x∈[0,1]} max_k |χ(x-k)| |x-k|^β`; the k-window is widened
    /// until the decay envelope certifies that no truncated shift can exceed
    /// the supremum found.
    pub fn generalized_moment(&self, beta: f64, grid_step: f64, exec: Execution) -> Result<Moment> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "moment order must be finite and ≥ 0, got {beta}"
            )));
        }
        let scan = |k_window: i64| {
            let g = |x: f64| {
                (-k_window..=k_window)
                    .map(|k| {
                        let u = x - k as f64;
                        self.value(u).abs() * u.abs().powf(beta)
                    })
                    .fold(0.0, f64::max)
            };
            grid_extremum(&g, 0.0, 1.0, grid_step, Sense::Max, exec)
        };
        let done = |e: Extremum, k_window: i64, at_decay_margin| Moment {
            beta,
            value: e.value,
            arg: e.arg,
            k_window,
            grid_step: e.grid_step,
            at_decay_margin,
        };
        if let Some(r) = self.support_radius() {
            let k = r.ceil() as i64 + 1;
            return Ok(done(scan(k), k, false));
        }
        let Some(decay) = self.decay else {
            return Err(Error::Chi1 {
                kernel: self.name.clone(),
                reason: "moments need compact support or a decay envelope".into(),
            });
        };
        if beta > decay.exponent {
            return Err(Error::MomentDivergent {
                kernel: self.name.clone(),
                beta,
                theta: decay.exponent,
            });
        }
        if beta == decay.exponent {
            let k = 64;
            let e = scan(k);
            return Ok(done(
                Extremum {
                    value: e.value.max(0.0),
                    ..e
                },
                k,
                true,
            ));
        }
        let mut k = 4;
        loop {
            let e = scan(k);
            // Every truncated term has |x - k| ≥ k_window for x ∈ [0, 1].
            let tail = decay.constant * (k as f64).powf(beta - decay.exponent);
            if tail <= e.value || k > 1 << 20 {
                return Ok(done(e, k, false));
            }
            k *= 2;
        }
    }

    /// Tail masses `∫_{|u|>n^(1-α)} |χ(u)| du` (equal to `n ∫_{|y|>n^-α} |χ(ny)| dy`)
    /// over `n_grid`, with a least-squares fit of `M n^-γ`.
    pub fn verify_chi4(
        &self,
        l1_norm: f64,
        alpha: f64,
        n_grid: &[u32],
        quad: &QuadSpec,
    ) -> Result<Chi4Report> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
            return Err(Error::InvalidInput(
                "n-grid must be non-empty, positive and increasing".into(),
            ));
        }
        let samples: Vec<(u32, f64)> = n_grid
            .iter()
            .map(|&n| {
                let t = (n as f64).powf(1.0 - alpha);
                let tail = match self.support_radius() {
                    Some(r) if t >= r => 0.0,
                    _ => (l1_norm - self.window_mass(t, quad).0).max(0.0),
                };
                (n, tail)
            })
            .collect();
        let tails: Vec<f64> = samples.iter().map(|s| s.1).collect();
        // Start of the longest non-increasing suffix.
        let slack = |a: f64| 1e-12 + 1e-9 * a.abs();
        let mut start = tails.len() - 1;
        while start > 0 && tails[start] <= tails[start - 1] + slack(tails[start - 1]) {
            start -= 1;
        }
        if start + 1 == tails.len() && tails.len() > 1 {
            return Err(Error::Chi4 {
                kernel: self.name.clone(),
                reason: "tail integrals are not decreasing in n".into(),
            });
        }
        let gamma_analytic = self
            .decay
            .filter(|d| d.exponent > 1.0)
            .map(|d| (1.0 - alpha) * (d.exponent - 1.0));

        // Compact regime: tails vanish from some n on.
        if let Some(first_zero) =
            (start..tails.len()).find(|&i| tails[i..].iter().all(|t| *t == 0.0))
        {
            return Ok(Chi4Report {
                alpha,
                samples,
                m: 1.0,
                gamma: f64::INFINITY,
                n_threshold: n_grid[first_zero],
                gamma_analytic,
                fit_residual: 0.0,
            });
        }
        let ns: Vec<f64> = n_grid[start..].iter().map(|&n| n as f64).collect();
        let ts = &tails[start..];
        let fit = if ns.len() >= 2 {
            log_log_fit(&ns, ts)?
        } else {
            return Err(Error::Chi4 {
                kernel: self.name.clone(),
                reason: "need at least two samples in the decreasing regime".into(),
            });
        };
        let gamma = -fit.slope;
        if !(gamma > 0.0) {
            return Err(Error::Chi4 {
                kernel: self.name.clone(),
                reason: format!("fitted gamma {gamma} is not positive"),
            });
        }
        // Smallest constant making the bound hold at every asserted sample.
        let m = ns
            .iter()
            .zip(ts)
            .map(|(n, t)| t * n.powf(gamma))
            .fold(0.0, f64::max);
        Ok(Chi4Report {
            alpha,
            samples,
            m,
            gamma,
            n_threshold: n_grid[start],
            gamma_analytic,
            fit_residual: fit.residual,
        })
    }
}

/// Constants of a kernel that every operator and bound uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub norms: Norms,
    /// Infimum on `[-1/2, 1/2]`; may be below the acceptance threshold.
    pub a_chi_real: f64,
    /// Infimum on `[-3/2, 3/2]`.
    pub a_chi_compact: f64,
    pub m0: Moment,
    /// `None` when the first moment diverges.
    pub m1: Option<Moment>,
}

/// A kernel definition together with its cached profile.
#[derive(Debug, Clone)]
pub struct Kernel {
    def: KernelDef,
    profile: KernelProfile,
}

impl std::ops::Deref for Kernel {
    type Target = KernelDef;
    fn deref(&self) -> &KernelDef {
        &self.def
    }
}

impl Kernel {
    pub fn new(def: KernelDef, res: &Resolution) -> Result<Self> {
        let exec = res.exec;
        let norms = def.compute_norms(res.sup_grid_step, res.l1_truncation, &res.quad, exec)?;
        if !(norms.sup_norm.is_finite() && norms.l1_norm.is_finite()) {
            return Err(Error::Chi1 {
                kernel: def.name.clone(),
                reason: "non-finite norm".into(),
            });
        }
        let a_chi_real = def
            .infimum_on_window(DomainFlavor::RealLine, res.sup_grid_step, exec)
            .value;
        let a_chi_compact = def
            .infimum_on_window(DomainFlavor::Compact, res.sup_grid_step, exec)
            .value;
        let m0 = def.generalized_moment(0.0, res.sup_grid_step, exec)?;
        let m1 = match def.generalized_moment(1.0, res.sup_grid_step, exec) {
            Ok(m) => Some(m),
            Err(Error::MomentDivergent { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Kernel {
            def,
            profile: KernelProfile {
                norms,
                a_chi_real,
                a_chi_compact,
                m0,
                m1,
            },
        })
    }

    pub fn parse(spec: &str, res: &Resolution) -> Result<Self> {
        Kernel::new(KernelDef::parse(spec)?, res)
    }

    pub fn def(&self) -> &KernelDef {
        &self.def
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    pub fn sup_norm(&self) -> f64 {
        self.profile.norms.sup_norm
    }

    pub fn l1_norm(&self) -> f64 {
        self.profile.norms.l1_norm
    }

    pub fn m0(&self) -> f64 {
        self.profile.m0.value
    }

    pub fn m1(&self) -> Option<f64> {
        self.profile.m1.map(|m| m.value)
    }

    /// `a_chi` for `flavor`, or a (chi2) error when it is not positive.
    pub fn a_chi(&self, flavor: DomainFlavor) -> Result<f64> {
        let a = match flavor {
            DomainFlavor::RealLine => self.profile.a_chi_real,
            DomainFlavor::Compact => self.profile.a_chi_compact,
        };
        if a > A_CHI_MIN {
            Ok(a)
        } else {
            Err(Error::Chi2 {
                kernel: self.name.clone(),
                flavor,
                a_chi: a,
            })
        }
    }

    /// Upper bound for `|χ(u)|` whenever `|u| ≥ dist`.
    #[inline]
    pub fn envelope(&self, dist: f64) -> f64 {
        let sup = self.profile.norms.sup_norm;
        if let Some(r) = self.def.support_radius() {
            return if dist > r { 0.0 } else { sup };
        }
        match self.def.decay {
            Some(d) if dist > 0.0 => sup.min(d.constant * dist.powf(-d.exponent)),
            _ => sup,
        }
    }

    pub fn report(&self, chi4: Option<&Chi4Report>) -> KernelReport {
        let mut moments = BTreeMap::new();
        moments.insert("0".to_string(), self.profile.m0.value);
        if let Some(m1) = self.profile.m1 {
            moments.insert("1".to_string(), m1.value);
        }
        KernelReport {
            name: self.name.clone(),
            sup_norm: self.sup_norm(),
            l1_norm: self.l1_norm(),
            a_chi: self.profile.a_chi_real,
            a_chi_compact: self.profile.a_chi_compact,
            moments,
            chi4: chi4.map(|c| Chi4Summary {
                alpha: c.alpha,
                m: c.m,
                gamma: c.gamma,
                n_threshold: c.n_threshold,
            }),
            grid_step: self.profile.norms.sup_grid_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi4Summary {
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
    /// Serialized as `null` when unbounded.
    pub gamma: f64,
    pub n_threshold: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub name: String,
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub a_chi: f64,
    pub a_chi_compact: f64,
    pub moments: BTreeMap<String, f64>,
    pub chi4: Option<Chi4Summary>,
    pub grid_step: f64,
}

/// `M₀(τ) = sup_x Σ_k τ(x-k)` for the characteristic function of `[0,1]`.
pub fn discrete_moment_of_indicator() -> f64 {
    discrete_sum_sup(|u| (0.0..=1.0).contains(&u))
}

/// Same for the half-open cell `[0,1)`.
pub fn discrete_moment_of_half_open_indicator() -> f64 {
    discrete_sum_sup(|u| (0.0..1.0).contains(&u))
}

fn discrete_sum_sup(tau: impl Fn(f64) -> bool) -> f64 {
    // The sum is 1-periodic in x; the grid contains both integer endpoints.
    (0..=1000)
        .map(|i| {
            let x = i as f64 / 1000.0;
            (-3..=3).filter(|&k| tau(x - k as f64)).count() as f64
        })
        .fold(0.0, f64::max)
}

fn fejer_value(x: f64) -> f64 {
    let t = 0.5 * PI * x;
    if t.abs() < 1e-8 {
        return 0.5 * (1.0 - t * t / 3.0);
    }
    let s = t.sin() / t;
    0.5 * s * s
}

/// `∫_{|u|>T} F(u) du = (4/π²)[sin²(πT/2)/T + (π/2)(π/2 - Si(πT))]`.
fn fejer_tail_mass(t: f64) -> f64 {
    let s = (0.5 * PI * t).sin();
    4.0 / (PI * PI) * (s * s / t + 0.5 * PI * si_complement(PI * t))
}

/// `π/2 - Si(z)` from the auxiliary-function asymptotic series; accurate to
/// double precision for `z ≳ 40`.
fn si_complement(z: f64) -> f64 {
    let z2 = z * z;
    let (mut f, mut g) = (0.0, 0.0);
    let (mut tf, mut tg) = (1.0 / z, 1.0 / z2);
    for k in 0..8 {
        f += tf;
        g += tg;
        let m = 2.0 * k as f64;
        tf *= -(m + 1.0) * (m + 2.0) / z2;
        tg *= -(m + 2.0) * (m + 3.0) / z2;
    }
    f * z.cos() + g * z.sin()
}

fn bspline_value(order: u32, x: f64) -> f64 {
    let half = order as f64 / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    let p = order as i32 - 1;
    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=order {
        let t = x + half - j as f64;
        if t > 0.0 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * binom * t.powi(p);
        }
        binom = binom * (order - j) as f64 / (j + 1) as f64;
    }
    let fact: f64 = (1..=p).map(|i| i as f64).product();
    (sum / fact).max(0.0)
}

pub(crate) fn read_xy_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::parse(
                "csv row",
                &format!("{}:{}", path.display(), i + 1),
                "expected two columns",
            ));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            // Header line.
            _ if i == 0 => continue,
            _ => {
                return Err(Error::parse(
                    "csv row",
                    &format!("{}:{}", path.display(), i + 1),
                    "non-numeric value",
                ))
            }
        }
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res() -> Resolution {
        Resolution::default()
    }

    #[test]
    fn eval_examples() {
        let f = KernelDef::fejer();
        assert!((f.eval(0.0).unwrap() - 0.5).abs() < 1e-15);
        let m2 = KernelDef::bspline(2).unwrap();
        assert!((m2.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(m2.eval(3.0).unwrap(), 0.0);
        assert!(m2.eval(f64::NAN).is_err());
    }

    #[test]
    fn bspline_partition_of_unity_and_mass() {
        for order in 2..=5 {
            let b = KernelDef::bspline(order).unwrap();
            for i in 0..50 {
                let x = -0.37 + i as f64 * 0.0213;
                let s: f64 = (-8..=8).map(|k| b.value(x - k as f64)).sum();
                assert!((s - 1.0).abs() < 1e-12, "order {order}: {s}");
            }
        }
        let m4 = KernelDef::bspline(4).unwrap();
        assert!((m4.value(1.5) - 1.0 / 48.0).abs() < 1e-14);
        assert!((m4.value(0.0) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn fejer_tail_matches_quadrature() {
        let f = KernelDef::fejer();
        let spec = QuadSpec::with_abs_tol(1e-12);
        for &t in &[16.0, 20.5, 33.3] {
            let inner = f.window_mass(2048.0, &spec).0 - f.window_mass(t, &spec).0
                + fejer_tail_mass(2048.0);
            assert!(
                (inner - fejer_tail_mass(t)).abs() < 1e-10,
                "T={t}: {inner} vs {}",
                fejer_tail_mass(t)
            );
        }
    }

    #[test]
    fn norms_of_rectangle() {
        let b = KernelDef::rectangle(1.0, 1.0);
        let n = b
            .compute_norms(1e-3, 256.0, &QuadSpec::default(), Execution::Sequential)
            .unwrap();
        assert!((n.sup_norm - 1.0).abs() < 1e-15);
        assert!((n.l1_norm - 2.0).abs() < 1e-12);
    }

    #[test]
    fn divergent_tail_is_rejected() {
        let k = KernelDef::new("lorentz-ish", |x: f64| 1.0 / (1.0 + x.abs()));
        assert!(matches!(
            k.compute_norms(1e-3, 256.0, &QuadSpec::default(), Execution::Sequential),
            Err(Error::Chi1 { .. })
        ));
        let k = k.with_decay(1.0, 1.0);
        assert!(matches!(
            k.compute_norms(1e-3, 256.0, &QuadSpec::default(), Execution::Sequential),
            Err(Error::Chi1 { .. })
        ));
    }

    #[test]
    fn chi2_rejects_hat_on_compact_window() {
        let m2 = KernelDef::bspline(2).unwrap();
        let e = m2.infimum_on_window(DomainFlavor::Compact, 1e-3, Execution::Sequential);
        assert_eq!(e.value, 0.0);
        assert!(matches!(
            m2.certify_chi2(DomainFlavor::Compact, 1e-3, Execution::Sequential),
            Err(Error::Chi2 { .. })
        ));
        assert!(
            (m2.certify_chi2(DomainFlavor::RealLine, 1e-3, Execution::Sequential)
                .unwrap()
                - 0.5)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn moment_beyond_decay_diverges() {
        let f = KernelDef::fejer();
        assert!(matches!(
            f.generalized_moment(2.5, 1e-3, Execution::Sequential),
            Err(Error::MomentDivergent { .. })
        ));
        let m2 = f
            .generalized_moment(2.0, 1e-3, Execution::Sequential)
            .unwrap();
        assert!(m2.at_decay_margin);
        assert!((m2.value - 2.0 / (PI * PI)).abs() < 1e-9);
    }

    #[test]
    fn chi4_compact_support_has_vanishing_tails() {
        let k = Kernel::new(KernelDef::bspline(2).unwrap(), &res()).unwrap();
        let r = k
            .verify_chi4(k.l1_norm(), 0.5, &[1, 2, 4, 8, 16], &QuadSpec::default())
            .unwrap();
        assert!(r.gamma.is_infinite());
        assert_eq!(r.n_threshold, 1);
        assert!(r.samples.iter().all(|s| s.1 == 0.0));
        assert_eq!(r.tail_bound(4), 0.0);
    }

    #[test]
    fn chi4_input_validation() {
        let k = Kernel::new(KernelDef::fejer(), &res()).unwrap();
        assert!(k
            .verify_chi4(1.0, 1.0, &[4, 8], &QuadSpec::default())
            .is_err());
        assert!(k
            .verify_chi4(1.0, 0.5, &[8, 4], &QuadSpec::default())
            .is_err());
    }

    #[test]
    fn discrete_moments_of_indicators() {
        assert_eq!(discrete_moment_of_indicator(), 2.0);
        assert_eq!(discrete_moment_of_half_open_indicator(), 1.0);
        let at_half: usize = (-3..=3)
            .filter(|&k| (0.0..=1.0).contains(&(0.5 - k as f64)))
            .count();
        assert_eq!(at_half, 1);
    }

    #[test]
    fn registry() {
        assert_eq!(KernelDef::parse("fejer").unwrap().name, "fejer");
        assert_eq!(
            KernelDef::parse("bspline:3").unwrap().support,
            Some((-1.5, 1.5))
        );
        assert!(KernelDef::parse("gauss").is_err());
        assert!(KernelDef::parse("bspline:x").is_err());
    }

    #[test]
    fn tabulated_kernel_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hat.csv");
        std::fs::write(&path, "x,value\n-1,0\n0,1\n1,0\n").unwrap();
        let k = KernelDef::from_csv(&path).unwrap();
        assert!((k.value(0.25) - 0.75).abs() < 1e-15);
        assert_eq!(k.value(1.5), 0.0);
        let k = Kernel::new(k, &res()).unwrap();
        assert!((k.l1_norm() - 1.0).abs() < 1e-12);
        assert!((k.profile().a_chi_real - 0.5).abs() < 1e-12);
    }
}
