//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line; the
//! test fails if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use maxprod::harness::report::{csv_string, Tabular};
use maxprod::harness::{
    run_kfunctional_bound, run_lipschitz_rate, run_theorem_bound_real_line, ExperimentConfig,
};
use maxprod::orlicz::{convex_sup_holds, modular};
use maxprod::smoothness::{curve, dyadic_deltas, fit_lipschitz, modulus, BoundaryMode};
use maxprod::{Domain, DomainFlavor, Kernel, OperatorInstance, PhiFunction, Resolution, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Runs one criterion and prints its verdict line outside the test harness capture.
fn criterion(id: u32, title: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    let line = format!(
        "{} [{id}] {title}: {detail} ({:.1}s)\n",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    ok
}

/// Shipped config runs: name -> (CSV text, verdict).
type Runs = BTreeMap<String, (String, bool)>;

fn run_config(path: &Path) -> Result<(ExperimentConfig, String, bool), String> {
    let cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
    let csv = |t: &dyn Tabular| csv_string(t.header(), &t.records()).map_err(|e| e.to_string());
    let (text, passed) = if cfg.name.starts_with("bound-real") {
        let l = run_theorem_bound_real_line(&cfg).map_err(|e| e.to_string())?;
        (csv(&l)?, l.verdict.passed)
    } else if cfg.name.starts_with("bound-interval") {
        let l = run_kfunctional_bound(&cfg).map_err(|e| e.to_string())?;
        (csv(&l)?, l.verdict.passed)
    } else if cfg.name.starts_with("rate") {
        let l = run_lipschitz_rate(&cfg).map_err(|e| e.to_string())?;
        (csv(&l)?, l.verdict.passed)
    } else {
        return Err(format!("unknown config kind {}", cfg.name));
    };
    Ok((cfg, text, passed))
}

fn shipped_configs() -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(common::configs_dir())
        .expect("configs directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

fn operator_algebra() -> Check {
    let start = Instant::now();
    let res = Resolution::default();
    let tol = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let domain = Domain::real_line(8.0).map_err(|e| e.to_string())?;
    let mut cases = 0;
    let mut worst = 0.0f64;
    for spec in ["bspline:2", "fejer"] {
        let kernel = Kernel::parse(spec, &res).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let f = common::random_signal(&mut rng, -2.0, 2.0);
            let g = common::random_signal(&mut rng, -2.0, 2.0);
            let h = common::random_signal(&mut rng, -2.0, 2.0);
            let lambda = rng.random_range(0.0..5.0);
            let n = rng.random_range(1..=64u32);
            let x = rng.random_range(-3.0..3.0);
            let op = OperatorInstance::new(&kernel, n, domain).map_err(|e| e.to_string())?;
            let k = |s: &Signal| {
                op.prepare(s)
                    .and_then(|p| p.apply(x))
                    .map_err(|e| e.to_string())
            };
            let (kf, kg) = (k(&f)?, k(&g)?);
            let ctx = || format!("{spec}, n = {n}, x = {x}");
            // (i) monotone
            let d1 = kf - k(&f.sum(&h))?;
            // (ii) sub-additive
            let d2 = k(&f.sum(&g))? - kf - kg;
            // (iii) contraction
            let d3 = (kf - kg).abs() - k(&f.abs_diff(&g))?;
            // (iv) positively homogeneous
            let d4 = (k(&f.scaled(lambda))? - lambda * kf).abs();
            for (p, d) in [
                ("monotone", d1),
                ("sub-additive", d2),
                ("contraction", d3),
                ("homogeneous", d4),
            ] {
                ensure(d <= tol, || format!("{p} violated by {d:e} ({})", ctx()))?;
                worst = worst.max(d);
            }
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s, limit 60s"))?;
    Ok(format!(
        "{cases} cases x 4 properties, worst excess {worst:.1e} <= 1e-8"
    ))
}

/// Root of `tan t = 2t` in `(1, π/2)`, where `sin²(πu/2)/u` peaks.
fn fejer_m1_oracle() -> f64 {
    let (mut lo, mut hi) = (1.0f64, 1.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.tan() - 2.0 * mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    t.sin().powi(2) / (PI * t)
}

fn kernel_certification() -> Check {
    let res = Resolution::default();
    let m2 = Kernel::parse("bspline:2", &res).map_err(|e| e.to_string())?;
    let fej = Kernel::parse("fejer", &res).map_err(|e| e.to_string())?;
    let fejer_at = |x: f64| 2.0 * (PI * x / 2.0).sin().powi(2) / (PI * PI * x * x);
    let a = |k: &Kernel, fl| k.a_chi(fl).map_err(|e| e.to_string());
    let m1 = |k: &Kernel| k.m1().ok_or_else(|| format!("{} has no m1", k.name));
    let table = [
        ("M2 m0", m2.m0(), 1.0),
        ("M2 m1", m1(&m2)?, 0.25),
        ("M2 l1", m2.l1_norm(), 1.0),
        ("M2 sup", m2.sup_norm(), 1.0),
        ("M2 a_chi", a(&m2, DomainFlavor::RealLine)?, 0.5),
        ("Fejer m0", fej.m0(), 0.5),
        ("Fejer m1", m1(&fej)?, fejer_m1_oracle()),
        ("Fejer l1", fej.l1_norm(), 1.0),
        ("Fejer sup", fej.sup_norm(), 0.5),
        (
            "Fejer a_chi",
            a(&fej, DomainFlavor::RealLine)?,
            fejer_at(0.5),
        ),
        (
            "Fejer a_chi compact",
            a(&fej, DomainFlavor::Compact)?,
            fejer_at(1.5),
        ),
    ];
    let mut worst = 0.0f64;
    for (name, got, want) in table {
        let e = rel_err(got, want);
        ensure(e <= 1e-6, || {
            format!("{name} = {got}, oracle {want}, rel err {e:e}")
        })?;
        worst = worst.max(e);
    }

    let domain = Domain::real_line(8.0).map_err(|e| e.to_string())?;
    let ns = [1u32, 2, 3, 5, 8, 13, 21, 34, 55, 89];
    let mut points = 0;
    for k in [&m2, &fej] {
        let a_chi = a(k, DomainFlavor::RealLine)?;
        for &n in &ns {
            let op = OperatorInstance::new(k, n, domain).map_err(|e| e.to_string())?;
            for i in 0..1000 {
                let x = -3.0 + 6.0 * i as f64 / 999.0;
                let s = op.kernel_sup(x);
                ensure(s >= a_chi - 1e-8, || {
                    format!("{}: sup {s} < a_chi {a_chi} at n = {n}, x = {x}", k.name)
                })?;
                points += 1;
            }
        }
    }

    let grid: Vec<u32> = (2..=8).map(|j| 1 << j).collect();
    let chi4 = fej
        .verify_chi4(fej.l1_norm(), 0.5, &grid, &res.quad)
        .map_err(|e| e.to_string())?;
    let target = (1.0 - 0.5) * (2.0 - 1.0);
    ensure((chi4.gamma - target).abs() <= 0.1, || {
        format!("Fejer gamma {} vs {target}", chi4.gamma)
    })?;
    Ok(format!(
        "11 constants within {worst:.1e} rel; kernel sup >= a_chi on {points} (x, n) points; Fejer gamma {:.4}",
        chi4.gamma
    ))
}

fn theorem_real_line(runs: &mut Runs) -> Check {
    let start = Instant::now();
    let mut checked = 0;
    let mut min_slack = f64::INFINITY;
    for kernel in ["fejer", "m2"] {
        for phi in ["p1", "p2", "zyg"] {
            for signal in ["hat", "step"] {
                let name = format!("bound-real-{kernel}-{phi}-{signal}");
                let cfg =
                    ExperimentConfig::load(common::configs_dir().join(format!("{name}.toml")))
                        .map_err(|e| e.to_string())?;
                ensure(
                    cfg.alpha == 0.5
                        && cfg.n_grid.first() == Some(&4)
                        && cfg.n_grid.last() == Some(&256),
                    || format!("{name}: unexpected grid or alpha"),
                )?;
                let ledger =
                    run_theorem_bound_real_line(&cfg).map_err(|e| format!("{name}: {e}"))?;
                let asserted: Vec<_> = ledger.asserted_rows().collect();
                ensure(!asserted.is_empty(), || format!("{name}: no asserted rows"))?;
                for r in &asserted {
                    ensure(r.slack >= -1e-6, || {
                        format!("{name}: slack {} at n = {}", r.slack, r.n)
                    })?;
                    min_slack = min_slack.min(r.slack);
                }
                let (first, last) = (&ledger.rows[0], ledger.rows.last().unwrap());
                ensure(last.lhs < first.lhs, || {
                    format!(
                        "{name}: lhs({}) = {} is not below lhs({}) = {}",
                        last.n, last.lhs, first.n, first.lhs
                    )
                })?;
                ensure(ledger.verdict.passed, || {
                    format!("{name}: {:?}", ledger.verdict.violations)
                })?;
                let text =
                    csv_string(ledger.header(), &ledger.records()).map_err(|e| e.to_string())?;
                runs.insert(name, (text, true));
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.0}s, limit 600s"))?;
    Ok(format!(
        "{checked} configs, min asserted slack {min_slack:.3e}, lhs(256) < lhs(4) everywhere"
    ))
}

fn corollary_rate(runs: &mut Runs) -> Check {
    let res = Resolution::default();
    let domain = Domain::real_line(8.0).map_err(|e| e.to_string())?;
    let phi = PhiFunction::parse("p:1").map_err(|e| e.to_string())?;
    let hat = Signal::hat();
    let c = curve(
        &phi,
        &hat,
        1.0,
        &dyadic_deltas(16),
        &domain,
        BoundaryMode::Overlap,
        &res,
    )
    .map_err(|e| e.to_string())?;
    for &(d, w) in &c.points {
        let oracle = 2.0 * d - d * d / 2.0;
        ensure((w - oracle).abs() <= 1e-9, || {
            format!("omega(hat, {d}) = {w}, closed form {oracle}")
        })?;
    }
    let lip = fit_lipschitz(&c).map_err(|e| e.to_string())?;
    ensure((lip.nu - 1.0).abs() <= 0.05, || {
        format!("fitted nu {}", lip.nu)
    })?;

    let mut parts = vec![format!("hat nu {:.4}", lip.nu)];
    for name in ["rate-fejer-p1-hat", "rate-m2-p1-hat"] {
        let cfg = ExperimentConfig::load(common::configs_dir().join(format!("{name}.toml")))
            .map_err(|e| e.to_string())?;
        let fit = run_lipschitz_rate(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let (Some(emp), Some(pred)) = (fit.rho_emp, fit.rho_pred) else {
            return Err(format!("{name}: no fit ({:?})", fit.verdict.violations));
        };
        ensure(fit.fit_points >= 5, || {
            format!("{name}: only {} points", fit.fit_points)
        })?;
        ensure(
            cfg.n_grid.first() == Some(&32) && cfg.n_grid.last() == Some(&256),
            || format!("{name}: grid"),
        )?;
        ensure(emp >= pred - 0.15, || {
            format!("{name}: rho_emp {emp} < rho {pred} - 0.15")
        })?;
        ensure(fit.verdict.passed, || {
            format!("{name}: {:?}", fit.verdict.violations)
        })?;
        parts.push(format!("{name} rho_emp {emp:.3} vs rho {pred:.3}"));
        let text = csv_string(fit.header(), &fit.records()).map_err(|e| e.to_string())?;
        runs.insert(name.into(), (text, true));
    }
    Ok(parts.join("; "))
}

fn theorem_interval(runs: &mut Runs) -> Check {
    let mut parts = Vec::new();
    for name in [
        "bound-interval-fejer-p2-sin2",
        "bound-interval-m4-p1-sin2",
        "bound-interval-fejer-p1-step",
    ] {
        let cfg = ExperimentConfig::load(common::configs_dir().join(format!("{name}.toml")))
            .map_err(|e| e.to_string())?;
        let ledger = run_kfunctional_bound(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let asserted: Vec<_> = ledger.rows.iter().filter(|r| r.asserted).collect();
        ensure(!asserted.is_empty(), || format!("{name}: no asserted rows"))?;
        ensure(
            ledger.constants.m1 > 0.0 && ledger.constants.a_chi > 1e-8,
            || format!("{name}: kernel not certified"),
        )?;
        let smooth = ledger.constants.deriv_norm.is_some();
        for r in &asserted {
            ensure(r.lhs <= r.rhs + 1e-6, || {
                format!("{name}: lhs {} > A1 K {} at n = {}", r.lhs, r.rhs, r.n)
            })?;
            if smooth {
                let w = r
                    .witness_rhs
                    .ok_or_else(|| format!("{name}: missing witness at n = {}", r.n))?;
                ensure(r.lhs <= w + 1e-6, || {
                    format!("{name}: lhs {} > witness {w} at n = {}", r.lhs, r.n)
                })?;
            }
        }
        ensure(ledger.verdict.passed, || {
            format!("{name}: {:?}", ledger.verdict.violations)
        })?;
        parts.push(format!(
            "{name}: {} asserted rows{}",
            asserted.len(),
            if smooth { " + witness" } else { "" }
        ));
        let text = csv_string(ledger.header(), &ledger.records()).map_err(|e| e.to_string())?;
        runs.insert(name.into(), (text, true));
    }
    Ok(parts.join("; "))
}

fn orlicz_oracles() -> Check {
    let res = Resolution::default();
    let real = Domain::real_line(8.0).map_err(|e| e.to_string())?;
    let unit = Domain::interval(0.0, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    // ∫(1-|x|)^p = 2/(p+1) and ∫_0^1 sin^4(πx) = 3/8.
    for p in [1.0, 1.5, 2.0, 3.0] {
        let phi = PhiFunction::power(p);
        for lambda in [1.0, 0.7] {
            let got = modular(&phi, &Signal::hat(), lambda, &real, &res.quad)
                .map_err(|e| e.to_string())?
                .value;
            let want = lambda.powf(p) * 2.0 / (p + 1.0);
            let e = rel_err(got, want);
            ensure(e <= 1e-8, || {
                format!("I[{lambda} hat] for p = {p}: {got} vs {want}")
            })?;
            worst = worst.max(e);
        }
    }
    let got = modular(
        &PhiFunction::power(2.0),
        &Signal::sin2(),
        1.0,
        &unit,
        &res.quad,
    )
    .map_err(|e| e.to_string())?
    .value;
    let e = rel_err(got, 0.375);
    ensure(e <= 1e-8, || format!("I[sin2] = {got} vs 3/8"))?;
    worst = worst.max(e);

    let step = Signal::parse("step").map_err(|e| e.to_string())?;
    let p1 = PhiFunction::parse("p:1").map_err(|e| e.to_string())?;
    for j in 1..=8 {
        let d = 0.5f64.powi(j);
        let w = modulus(&p1, &step, 1.0, d, &real, BoundaryMode::Overlap, &res)
            .map_err(|e| e.to_string())?
            .omega;
        ensure((w - 2.0 * d).abs() <= 1e-6, || {
            format!("omega(indicator, {d}) = {w}")
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let phis = ["p:1", "p:2", "zygmund:1:1", "exp:1"]
        .map(|s| PhiFunction::parse(s).expect("registered phi"));
    let vectors = 10_000;
    for _ in 0..vectors {
        let len = rng.random_range(1..=20);
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let v: Vec<f64> = (0..len)
            .map(|_| scale * rng.random_range(0.0..1.0))
            .collect();
        for phi in &phis {
            ensure(convex_sup_holds(phi, &v, 0.0), || {
                format!("convex sup fails for {phi} on {v:?}")
            })?;
        }
    }
    Ok(format!(
        "power modulars within {worst:.1e} rel; omega(indicator) = 2 delta on 8 deltas; convex sup on {vectors} vectors x 4 phi"
    ))
}

fn determinism(runs: &Runs) -> Check {
    let configs = shipped_configs();
    ensure(!configs.is_empty(), || "no shipped configs".into())?;
    let mut compared = 0;
    for path in &configs {
        let (cfg, first, _) = run_config(path)?;
        let second = match runs.get(&cfg.name) {
            Some((text, _)) => text.clone(),
            None => run_config(path)?.1,
        };
        ensure(first == second, || {
            format!("{}: CSV differs between runs", cfg.name)
        })?;
        compared += 1;
    }
    Ok(format!(
        "{compared} shipped configs reproduce byte-identical CSV"
    ))
}

#[test]
fn acceptance() {
    let mut runs = Runs::new();
    let results = [
        criterion(1, "operator algebra", operator_algebra),
        criterion(2, "kernel certification", kernel_certification),
        criterion(3, "modulus-of-smoothness bound on the real line", || {
            theorem_real_line(&mut runs)
        }),
        criterion(4, "Lipschitz convergence rate", || {
            corollary_rate(&mut runs)
        }),
        criterion(5, "K-functional bound on [0,1]", || {
            theorem_interval(&mut runs)
        }),
        criterion(6, "Orlicz machinery oracles", orlicz_oracles),
        criterion(7, "determinism", || determinism(&runs)),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
