//! Signals: real functions on ℝ or on an interval, with the metadata the
//! operators and modulars rely on (support, kinks, sign information and,
//! where available, closed-form derivative or antiderivative).

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{read_xy_csv, RealFn};

#[derive(Clone)]
pub struct Signal {
    pub name: String,
    eval: RealFn,
    /// Outside this interval the signal equals `baseline`.
    pub support: Option<(f64, f64)>,
    pub baseline: f64,
    /// Points where the signal or its derivative may jump.
    pub breakpoints: Vec<f64>,
    pub nonneg: bool,
    pub lower_bound: Option<f64>,
    derivative: Option<RealFn>,
    antiderivative: Option<RealFn>,
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Signal")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("baseline", &self.baseline)
            .field("nonneg", &self.nonneg)
            .field("lower_bound", &self.lower_bound)
            .finish_non_exhaustive()
    }
}

impl Signal {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Signal {
            name: name.into(),
            eval: Arc::new(eval),
            support: None,
            baseline: 0.0,
            breakpoints: Vec::new(),
            nonneg: false,
            lower_bound: None,
            derivative: None,
            antiderivative: None,
        }
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = Some((lo, hi));
        self.breakpoints.push(lo);
        self.breakpoints.push(hi);
        self.breakpoints.sort_by(f64::total_cmp);
        self.breakpoints.dedup();
        self
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points);
        self.breakpoints.sort_by(f64::total_cmp);
        self.breakpoints.dedup();
        self
    }

    /// Declares `f ≥ bound`; a zero bound also sets the nonnegativity flag.
    pub fn with_lower_bound(mut self, bound: f64) -> Self {
        self.lower_bound = Some(bound);
        self.nonneg = bound >= 0.0;
        self
    }

    pub fn with_derivative(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn with_antiderivative(
        mut self,
        big_f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.antiderivative = Some(Arc::new(big_f));
        self
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.support {
            Some((lo, hi)) if x < lo || x > hi => self.baseline,
            _ => (self.eval)(x),
        }
    }

    pub fn derivative(&self) -> Option<&RealFn> {
        self.derivative.as_ref()
    }

    pub fn antiderivative(&self) -> Option<&RealFn> {
        self.antiderivative.as_ref()
    }

    pub fn is_compact(&self) -> bool {
        self.support.is_some() && self.baseline == 0.0
    }

    /// Breakpoints inside `[lo, hi]`, without the ends.
    pub fn breaks_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints
            .iter()
            .copied()
            .filter(move |p| *p > lo && *p < hi)
    }

    /// `f(x) = x` restricted to `[lo, hi]` with baseline 0; used by several oracles.
    pub fn linear(lo: f64, hi: f64) -> Self {
        Signal::new(format!("linear:{lo}:{hi}"), |x| x)
            .with_support(lo, hi)
            .with_derivative(|_| 1.0)
            .with_antiderivative(move |x| {
                let x = x.clamp(lo, hi);
                0.5 * x * x
            })
    }

    pub fn zero() -> Self {
        Signal::new("zero", |_| 0.0)
            .with_support(0.0, 0.0)
            .with_lower_bound(0.0)
            .with_derivative(|_| 0.0)
            .with_antiderivative(|_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        // A degenerate support keeps the metadata uniform: the signal is its baseline everywhere.
        Signal::new(format!("const:{c}"), move |_| c)
            .with_support(0.0, 0.0)
            .with_baseline(c)
            .with_lower_bound(c)
            .with_derivative(|_| 0.0)
            .with_antiderivative(move |x| c * x)
    }

    /// `max(1 - |x|, 0)`.
    pub fn hat() -> Self {
        Signal::new("hat", |x: f64| (1.0 - x.abs()).max(0.0))
            .with_support(-1.0, 1.0)
            .with_breakpoints([0.0])
            .with_lower_bound(0.0)
            .with_antiderivative(hat_antiderivative)
    }

    /// Characteristic function of `[a, b]`.
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidInput(format!(
                "indicator needs a < b, got [{a}, {b}]"
            )));
        }
        Signal::piecewise_constant(format!("indicator:{a}:{b}"), vec![a, b], vec![1.0])
    }

    /// `sin²(πx)` on `[0, 1]`, zero elsewhere; a `C¹` nonnegative signal.
    pub fn sin2() -> Self {
        use std::f64::consts::PI;
        Signal::new("sin2", |x: f64| (PI * x).sin().powi(2))
            .with_support(0.0, 1.0)
            .with_lower_bound(0.0)
            .with_derivative(|x: f64| {
                if (0.0..=1.0).contains(&x) {
                    PI * (2.0 * PI * x).sin()
                } else {
                    0.0
                }
            })
            .with_antiderivative(|x: f64| {
                let x = x.clamp(0.0, 1.0);
                0.5 * x - (2.0 * PI * x).sin() / (4.0 * PI)
            })
    }

    /// `sin(2πt)` on `[0, 1]`, zero elsewhere; changes sign, bounded below by `-1`.
    pub fn sine() -> Self {
        use std::f64::consts::PI;
        Signal::new("sine", |x: f64| (2.0 * PI * x).sin())
            .with_support(0.0, 1.0)
            .with_lower_bound(-1.0)
            .with_antiderivative(|x: f64| {
                let x = x.clamp(0.0, 1.0);
                (1.0 - (2.0 * PI * x).cos()) / (2.0 * PI)
            })
    }

    /// `hat - c` on `[-1, 1]` and `-c` outside: bounded below by `-c`.
    pub fn hat_shift(c: f64) -> Self {
        Signal::new(format!("hat-shift:{c}"), move |x: f64| {
            (1.0 - x.abs()).max(0.0) - c
        })
        .with_support(-1.0, 1.0)
        .with_baseline(-c)
        .with_breakpoints([0.0])
        .with_lower_bound(-c)
        .with_antiderivative(move |x| hat_antiderivative(x) - c * x)
    }

    /// `√x` on `[0, 1]`: bounded variation, infinite slope at the origin.
    pub fn sqrt_cusp() -> Self {
        Signal::new("sqrt-cusp", |x: f64| x.max(0.0).sqrt())
            .with_support(0.0, 1.0)
            .with_lower_bound(0.0)
            .with_antiderivative(|x: f64| 2.0 / 3.0 * x.clamp(0.0, 1.0).powf(1.5))
    }

    /// `√(2 log(1/x))` on `(0, 1)`: unbounded near 0, in every `L^p` but only
    /// in the `exp(u²)` Orlicz space for small scalings.
    pub fn log_singular() -> Self {
        Signal::new("log-singular", |x: f64| {
            if x > 0.0 && x < 1.0 {
                (2.0 * (1.0 / x).ln()).sqrt()
            } else {
                0.0
            }
        })
        .with_support(0.0, 1.0)
        .with_lower_bound(0.0)
    }

    /// Piecewise-constant signal: `values[i]` on `[edges[i], edges[i+1])`, zero
    /// outside. The right end is included in the last piece.
    pub fn piecewise_constant(
        name: impl Into<String>,
        edges: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if edges.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidInput(
                "piecewise-constant signal needs one more edge than values".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]))
            || edges.iter().chain(&values).any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "edges must be finite and strictly increasing".into(),
            ));
        }
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let min = values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .min(0.0);
        let e = edges.clone();
        let v = values.clone();
        let eval = move |x: f64| {
            if x < e[0] || x > e[e.len() - 1] {
                return 0.0;
            }
            let i = e.partition_point(|t| *t <= x).clamp(1, v.len());
            v[i - 1]
        };
        let (e2, v2) = (edges.clone(), values);
        let anti = move |x: f64| {
            let x = x.clamp(lo, hi);
            let mut acc = 0.0;
            for i in 0..v2.len() {
                if x <= e2[i] {
                    break;
                }
                acc += v2[i] * (x.min(e2[i + 1]) - e2[i]);
            }
            acc
        };
        Ok(Signal::new(name, eval)
            .with_support(lo, hi)
            .with_breakpoints(edges)
            .with_lower_bound(min)
            .with_antiderivative(anti))
    }

    /// CSV rows `t,value`: value `i` holds on `[t_i, t_{i+1})`; the last row closes the table.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (ts, mut vs) = read_xy_csv(path)?;
        if ts.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "{}: need at least two rows",
                path.display()
            )));
        }
        vs.pop();
        Signal::piecewise_constant(format!("file:{}", path.display()), ts, vs)
    }

    /// Registry lookup: `hat`, `step`, `indicator:a:b`, `zero`, `const:c`,
    /// `sin2`, `sine`, `hat-shift:c`, `sqrt-cusp`, `log-singular`, `file:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(path) = spec.strip_prefix("file:") {
            return Signal::from_csv(path);
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse("signal", spec, format!("bad number {s:?}")))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["hat"] => Ok(Signal::hat()),
            ["step"] => {
                let mut s = Signal::indicator(0.0, 1.0)?;
                s.name = "step".into();
                Ok(s)
            }
            ["indicator", a, b] => Signal::indicator(num(a)?, num(b)?),
            ["zero"] => Ok(Signal::zero()),
            ["const", c] => Ok(Signal::constant(num(c)?)),
            ["sin2"] => Ok(Signal::sin2()),
            ["sine"] => Ok(Signal::sine()),
            ["hat-shift", c] => Ok(Signal::hat_shift(num(c)?)),
            ["sqrt-cusp"] => Ok(Signal::sqrt_cusp()),
            ["log-singular"] => Ok(Signal::log_singular()),
            _ => Err(Error::parse("signal", spec, "unknown signal name")),
        }
    }

    /// `f - c`, declared nonnegative when `c` is the lower bound.
    pub fn minus_constant(&self, c: f64) -> Signal {
        let inner = self.clone();
        let mut s = Signal::new(format!("{}-({c})", self.name), move |x| inner.value(x) - c);
        s.support = self.support;
        s.baseline = self.baseline - c;
        s.breakpoints = self.breakpoints.clone();
        if let Some(lb) = self.lower_bound {
            s = s.with_lower_bound(lb - c);
        }
        if let Some(d) = self.derivative.clone() {
            s.derivative = Some(d);
        }
        if let Some(big_f) = self.antiderivative.clone() {
            s.antiderivative = Some(Arc::new(move |x| big_f(x) - c * x));
        }
        s
    }

    /// `μ f` for `μ ≥ 0`.
    pub fn scaled(&self, mu: f64) -> Signal {
        let inner = self.clone();
        let mut s = Signal::new(format!("{mu}*{}", self.name), move |x| mu * inner.value(x));
        s.support = self.support;
        s.baseline = mu * self.baseline;
        s.breakpoints = self.breakpoints.clone();
        s.lower_bound = self
            .lower_bound
            .map(|b| if mu >= 0.0 { mu * b } else { f64::NEG_INFINITY });
        s.nonneg = self.nonneg && mu >= 0.0;
        if let Some(d) = self.derivative.clone() {
            s.derivative = Some(Arc::new(move |x| mu * d(x)));
        }
        if let Some(big_f) = self.antiderivative.clone() {
            s.antiderivative = Some(Arc::new(move |x| mu * big_f(x)));
        }
        s
    }

    /// Pointwise sum.
    pub fn sum(&self, other: &Signal) -> Signal {
        let (a, b) = (self.clone(), other.clone());
        let mut s = Signal::new(format!("{}+{}", self.name, other.name), move |x| {
            a.value(x) + b.value(x)
        });
        s.support = match (self.support, other.support) {
            (Some(p), Some(q)) => Some((p.0.min(q.0), p.1.max(q.1))),
            _ => None,
        };
        s.baseline = self.baseline + other.baseline;
        s.breakpoints = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        s.breakpoints.sort_by(f64::total_cmp);
        s.breakpoints.dedup();
        s.nonneg = self.nonneg && other.nonneg;
        s.lower_bound = match (self.lower_bound, other.lower_bound) {
            (Some(p), Some(q)) => Some(p + q),
            _ => None,
        };
        if let (Some(fa), Some(fb)) = (self.antiderivative.clone(), other.antiderivative.clone()) {
            s.antiderivative = Some(Arc::new(move |x| fa(x) + fb(x)));
        }
        if let (Some(da), Some(db)) = (self.derivative.clone(), other.derivative.clone()) {
            s.derivative = Some(Arc::new(move |x| da(x) + db(x)));
        }
        s
    }

    /// `|f - g|`.
    pub fn abs_diff(&self, other: &Signal) -> Signal {
        let (a, b) = (self.clone(), other.clone());
        let mut s = Signal::new(format!("|{}-{}|", self.name, other.name), move |x| {
            (a.value(x) - b.value(x)).abs()
        });
        s.support = match (self.support, other.support) {
            (Some(p), Some(q)) => Some((p.0.min(q.0), p.1.max(q.1))),
            _ => None,
        };
        s.baseline = (self.baseline - other.baseline).abs();
        s.breakpoints = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        s.breakpoints.sort_by(f64::total_cmp);
        s.breakpoints.dedup();
        s.with_lower_bound(0.0)
    }

    /// `f(· + y)`.
    pub fn shifted(&self, y: f64) -> Signal {
        let inner = self.clone();
        let mut s = Signal::new(format!("{}(.+{y})", self.name), move |x| inner.value(x + y));
        s.support = self.support.map(|(lo, hi)| (lo - y, hi - y));
        s.baseline = self.baseline;
        s.breakpoints = self.breakpoints.iter().map(|p| p - y).collect();
        s.nonneg = self.nonneg;
        s.lower_bound = self.lower_bound;
        if let Some(big_f) = self.antiderivative.clone() {
            s.antiderivative = Some(Arc::new(move |x| big_f(x + y)));
        }
        if let Some(d) = self.derivative.clone() {
            s.derivative = Some(Arc::new(move |x| d(x + y)));
        }
        s
    }
}

fn hat_antiderivative(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    if x <= 0.0 {
        0.5 * (1.0 + x) * (1.0 + x)
    } else {
        1.0 - 0.5 * (1.0 - x) * (1.0 - x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_values_and_mass() {
        let h = Signal::hat();
        assert_eq!(h.value(0.0), 1.0);
        assert_eq!(h.value(2.0), 0.0);
        let big_f = h.antiderivative().unwrap();
        assert!((big_f(1.0) - big_f(-1.0) - 1.0).abs() < 1e-15);
        assert!((big_f(0.5) - big_f(0.0) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn piecewise_constant_table() {
        let s = Signal::piecewise_constant("t", vec![0.0, 0.5, 2.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(s.value(0.25), 2.0);
        assert_eq!(s.value(0.5), 1.0);
        assert_eq!(s.value(2.0), 1.0);
        assert_eq!(s.value(2.5), 0.0);
        let big_f = s.antiderivative().unwrap();
        assert!((big_f(1.0) - 1.5).abs() < 1e-15);
        assert!(s.nonneg);
    }

    #[test]
    fn csv_signal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "t,value\n0,1\n0.5,3\n1,0\n").unwrap();
        let s = Signal::from_csv(&p).unwrap();
        assert_eq!(s.value(0.7), 3.0);
        assert_eq!(s.support, Some((0.0, 1.0)));
    }

    #[test]
    fn registry() {
        for name in [
            "hat",
            "step",
            "indicator:0.25:0.75",
            "zero",
            "const:2",
            "sin2",
            "sine",
            "hat-shift:0.3",
            "sqrt-cusp",
        ] {
            Signal::parse(name).unwrap();
        }
        assert!(Signal::parse("indicator:1:0").is_err());
        assert!(Signal::parse("nope").is_err());
    }

    #[test]
    fn shift_and_minus_constant() {
        let s = Signal::hat_shift(0.3);
        assert!((s.value(5.0) + 0.3).abs() < 1e-15);
        let t = s.minus_constant(-0.3);
        assert!(t.nonneg);
        assert!((t.value(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(t.value(5.0), 0.0);
        let u = Signal::hat().shifted(0.5);
        assert_eq!(u.value(-0.5), 1.0);
    }
}
