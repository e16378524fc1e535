use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use maxprod::harness::report::{emit_reports, write_csv, write_json};
use maxprod::harness::{self, ExperimentConfig, Verdict};
use maxprod::orlicz::{modular, Domain};
use maxprod::smoothness::{self, BoundaryMode};
use maxprod::{Execution, Kernel, OperatorInstance, PhiFunction, Resolution, Signal};

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "maxprod",
    version,
    about = "Max-product Kantorovich operators in Orlicz spaces"
)]
struct Cli {
    /// Directory for reports; overrides the one in a config file.
    #[arg(long, global = true, env = "MAXPROD_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Run every inner loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check (chi1)-(chi4) for a kernel and print its constants as JSON.
    VerifyKernel {
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 8, 16, 32, 64, 128, 256])]
        n_grid: Vec<u32>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate K_n f on a uniform grid and write `x,K_n(f)(x),f(x)` rows.
    Reconstruct {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        signal: String,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value = "real:R=8")]
        domain: String,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        /// Use K_n(f - c) + c with c the signal's lower bound.
        #[arg(long)]
        shifted: bool,
        #[arg(long, default_value = "grid.csv")]
        out: PathBuf,
    },
    /// Modulus of smoothness curve, written as `delta,omega` rows.
    Smoothness {
        #[arg(long)]
        phi: String,
        #[arg(long)]
        signal: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "dyadic:16")]
        deltas: String,
        #[arg(long, default_value = "real:R=8")]
        domain: String,
        #[arg(long, value_enum, default_value = "overlap")]
        boundary: Boundary,
        #[arg(long, default_value = "smoothness.csv")]
        out: PathBuf,
    },
    /// Upper estimate of the K-functional with its witness, as JSON.
    Kfun {
        #[arg(long)]
        phi: String,
        #[arg(long)]
        signal: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "interval:0:1")]
        domain: String,
        #[arg(long, default_value = "kfun.json")]
        out: PathBuf,
    },
    /// Modulus-of-smoothness error bound on the real line.
    BoundReal(ExperimentArgs),
    /// K-functional error bound on a compact interval.
    BoundInterval(ExperimentArgs),
    /// Empirical convergence rate against the Lipschitz prediction.
    Rate(ExperimentArgs),
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Boundary {
    Overlap,
    ZeroExtension,
}

impl From<Boundary> for BoundaryMode {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Overlap => BoundaryMode::Overlap,
            Boundary::ZeroExtension => BoundaryMode::ZeroExtension,
        }
    }
}

/// A config file, or flags, or a config file with some fields overridden by flags.
#[derive(Args)]
struct ExperimentArgs {
    /// TOML or JSON experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<u32>>,
    #[arg(long)]
    shifted: bool,
}

impl ExperimentArgs {
    fn into_config(
        self,
        default_name: &str,
        default_domain: &str,
        exec: Execution,
    ) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let (Some(kernel), Some(phi), Some(signal)) =
                    (&self.kernel, &self.phi, &self.signal)
                else {
                    bail!("without --config, --kernel, --phi and --signal are required");
                };
                let domain = self.domain.as_deref().unwrap_or(default_domain);
                ExperimentConfig::new(default_name, kernel, phi, signal, domain)
            }
        };
        if let Some(v) = self.name {
            cfg.name = v;
        }
        if let Some(v) = self.kernel {
            cfg.kernel = v;
        }
        if let Some(v) = self.phi {
            cfg.phi = v;
        }
        if let Some(v) = self.signal {
            cfg.signal = v;
        }
        if let Some(v) = self.domain {
            cfg.domain = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.n_grid {
            cfg.n_grid = v;
        }
        cfg.shifted |= self.shifted;
        if exec == Execution::Sequential {
            cfg.resolution.exec = exec;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve_out(out_dir: Option<&Path>, file: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if file.is_relative() => dir.join(file),
        _ => file.to_path_buf(),
    }
}

fn window(domain: &Domain) -> (f64, f64) {
    domain.bounds()
}

fn report_verdict(label: &str, verdict: &Verdict, csv: &Path, json: &Path) -> bool {
    out!("{label}: {}", if verdict.passed { "PASS" } else { "FAIL" });
    for v in &verdict.violations {
        out!("  violation: {v}");
    }
    for n in &verdict.notes {
        out!("  note: {n}");
    }
    out!("  csv:  {}", csv.display());
    out!("  json: {}", json.display());
    verdict.passed
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let res = Resolution::default().with_exec(exec);
    let out_dir = cli.out_dir.as_deref();
    match cli.command {
        Command::VerifyKernel {
            kernel,
            alpha,
            n_grid,
            out,
        } => {
            let k = Kernel::parse(&kernel, &res)?;
            let chi4 = k.verify_chi4(k.l1_norm(), alpha, &n_grid, &res.quad)?;
            let report = k.report(Some(&chi4));
            out!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(out) = out {
                write_json(&resolve_out(out_dir, &out), &report)?;
            }
            Ok(true)
        }
        Command::Reconstruct {
            kernel,
            signal,
            n,
            domain,
            points,
            shifted,
            out,
        } => {
            let k = Kernel::parse(&kernel, &res)?;
            let f = Signal::parse(&signal)?;
            let domain = Domain::parse(&domain)?;
            let op = OperatorInstance::new(&k, n, domain)?;
            let prepared = if shifted {
                op.prepare_shifted(&f)?
            } else {
                op.prepare(&f)?
            };
            let (lo, hi) = window(&domain);
            let points = points.max(2);
            let xs: Vec<f64> = (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (points - 1) as f64
                    }
                })
                .collect();
            let ks = prepared.evaluate(&xs, exec)?;
            let rows: Vec<Vec<f64>> = xs
                .iter()
                .zip(&ks)
                .map(|(&x, &kx)| vec![x, kx, f.value(x)])
                .collect();
            let path = resolve_out(out_dir, &out);
            write_csv(&path, &["x", "K_n(f)(x)", "f(x)"], &rows)?;
            out!("wrote {} rows to {}", rows.len(), path.display());
            Ok(true)
        }
        Command::Smoothness {
            phi,
            signal,
            lambda,
            deltas,
            domain,
            boundary,
            out,
        } => {
            let phi = PhiFunction::parse(&phi)?;
            let f = Signal::parse(&signal)?;
            let domain = Domain::parse(&domain)?;
            let deltas = smoothness::parse_deltas(&deltas)?;
            let c = smoothness::curve(&phi, &f, lambda, &deltas, &domain, boundary.into(), &res)?;
            let rows: Vec<Vec<f64>> = c.points.iter().map(|&(d, w)| vec![d, w]).collect();
            let path = resolve_out(out_dir, &out);
            write_csv(&path, &["delta", "omega"], &rows)?;
            out!(
                "omega is a lower bound (maximum over {} shifts per sign)",
                c.h_points
            );
            out!("wrote {} rows to {}", rows.len(), path.display());
            Ok(true)
        }
        Command::Kfun {
            phi,
            signal,
            lambda,
            delta,
            domain,
            out,
        } => {
            let phi = PhiFunction::parse(&phi)?;
            let f = Signal::parse(&signal)?;
            let domain = Domain::parse(&domain)?;
            let est = smoothness::k_functional(&phi, &f, lambda, delta, &domain, &res)?;
            let plain = modular(&phi, &f, lambda, &domain, &res.quad)?;
            let summary = serde_json::json!({
                "orientation": harness::ledger::K_ORIENTATION,
                "phi": phi.to_string(),
                "signal": f.name,
                "domain": domain.to_string(),
                "estimate": est,
                "modular_of_f": plain,
            });
            let path = resolve_out(out_dir, &out);
            write_json(&path, &summary)?;
            out!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::BoundReal(args) => {
            let cfg = args.into_config("bound-real", "real:R=8", exec)?;
            let ledger = harness::run_theorem_bound_real_line(&cfg)?;
            let (csv, json) = (cfg.csv_path(out_dir), cfg.json_path(out_dir));
            emit_reports(&ledger, &csv, &json)?;
            Ok(report_verdict(&cfg.name, &ledger.verdict, &csv, &json))
        }
        Command::BoundInterval(args) => {
            let cfg = args.into_config("bound-interval", "interval:0:1", exec)?;
            let ledger = harness::run_kfunctional_bound(&cfg)?;
            let (csv, json) = (cfg.csv_path(out_dir), cfg.json_path(out_dir));
            emit_reports(&ledger, &csv, &json)?;
            Ok(report_verdict(&cfg.name, &ledger.verdict, &csv, &json))
        }
        Command::Rate(args) => {
            let cfg = args.into_config("rate", "real:R=8", exec)?;
            let fit = harness::run_lipschitz_rate(&cfg)?;
            let (csv, json) = (cfg.csv_path(out_dir), cfg.json_path(out_dir));
            emit_reports(&fit, &csv, &json)?;
            if let (Some(e), Some(p)) = (fit.rho_emp, fit.rho_pred) {
                out!("rho_emp = {e:.4}, rho_pred = {p:.4}");
            }
            Ok(report_verdict(&cfg.name, &fit.verdict, &csv, &json))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).context("maxprod") {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
