use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::kernels::KernelReport;
use crate::quad::QuadSpec;
use crate::smoothness::LipschitzFit;

/// Slack tolerance for asserted rows.
pub const SLACK_TOLERANCE: f64 = 1e-6;

/// Rate fits may undershoot the predicted exponent by this much.
pub const RATE_TOLERANCE: f64 = 0.15;

pub const OMEGA_ORIENTATION: &str =
    "omega is a finite h-grid maximum, a lower bound of the true supremum; \
     slack is asserted against the larger of two h-resolutions";
pub const K_ORIENTATION: &str = "the K-functional is a minimum over a finite smoothing family, an upper bound of the true infimum";
pub const LHS_ORIENTATION: &str =
    "lhs includes an upper bound for the part of the real line outside the integration window";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub violations: Vec<String>,
    pub notes: Vec<String>,
}

impl Verdict {
    pub(crate) fn finish(mut self) -> Self {
        self.passed = self.violations.is_empty();
        self
    }
}

/// Integration resolution used for every left-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhsResolution {
    pub cell_density: usize,
    pub quad: QuadSpec,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub a_chi: f64,
    /// `M₀(τ)` for the indicator of `[0,1]`.
    pub m0_tau: f64,
    #[serde(rename = "M")]
    pub m: f64,
    /// `null` for compactly supported kernels.
    pub gamma: f64,
    pub gamma_analytic: Option<f64>,
    pub alpha: f64,
    pub lambda: f64,
    /// `‖χ‖_∞ / a_χ`.
    pub scale: f64,
    /// Lower bound subtracted by the shifted operator, 0 otherwise.
    pub offset: f64,
    /// `I^φ[scale · 8λ (f - offset)]`.
    pub modular_8: f64,
    pub chi4_n_threshold: u32,
    pub n_threshold: u32,
    pub h_points: usize,
    pub h_points_fine: usize,
    pub lhs_resolution: LhsResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: u32,
    pub lhs: f64,
    /// Part of `lhs` bounded analytically outside the window.
    pub lhs_tail: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    /// Terms 1 and 3 at the coarse h-resolution.
    pub term1_coarse: f64,
    pub term3_coarse: f64,
    pub rhs: f64,
    pub slack: f64,
    pub asserted: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub config: ExperimentConfig,
    pub kernel: KernelReport,
    pub phi: String,
    pub constants: BoundConstants,
    pub lambda_trace: Vec<(f64, f64)>,
    pub rows: Vec<BoundRow>,
    pub orientation: Vec<String>,
    pub verdict: Verdict,
}

impl BoundLedger {
    pub fn asserted_rows(&self) -> impl Iterator<Item = &BoundRow> {
        self.rows.iter().filter(|r| r.asserted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KConstants {
    pub l1_norm: f64,
    pub m0: f64,
    pub m1: f64,
    /// Compact-flavor `a_χ`.
    pub a_chi: f64,
    pub lambda0: f64,
    /// `λ₀ a_χ / (6 m₀)`.
    pub lambda1: f64,
    pub a1: f64,
    pub a2: f64,
    pub offset: f64,
    /// `‖f'‖_∞` when the signal declares a derivative.
    pub deriv_norm: Option<f64>,
    pub min_admissible_n: Option<u32>,
    /// Smallest grid `n` with `λ₀(m₀/2 + m₁) / (n a_χ) ≤ 1`.
    pub moment_n_threshold: Option<u32>,
    pub n_threshold: Option<u32>,
    pub bandwidths: Vec<f64>,
    pub derivative_grid: usize,
    pub lhs_resolution: LhsResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub n: u32,
    pub lhs: f64,
    /// Upper estimate of `𝒦(f, λ₀, A₂/n)`.
    pub k_functional: f64,
    pub witness: String,
    pub rhs: f64,
    /// `A₁ (A₂/n) φ(‖f'‖_∞)`.
    pub witness_rhs: Option<f64>,
    pub slack: f64,
    pub t_n: f64,
    pub asserted: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLedger {
    pub config: ExperimentConfig,
    pub kernel: KernelReport,
    pub phi: String,
    pub constants: KConstants,
    pub lambda_trace: Vec<(f64, f64)>,
    pub rows: Vec<KRow>,
    pub orientation: Vec<String>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u32,
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub config: ExperimentConfig,
    pub kernel: KernelReport,
    pub lambda: f64,
    pub alpha: f64,
    pub nu: Option<f64>,
    pub lipschitz: Option<LipschitzFit>,
    /// `null` for compactly supported kernels.
    pub gamma: f64,
    pub rho_pred: Option<f64>,
    pub rho_emp: Option<f64>,
    pub residual: Option<f64>,
    /// Rows used by the fit.
    pub fit_points: usize,
    pub monotone: bool,
    pub skipped: Option<String>,
    pub rows: Vec<RateRow>,
    pub verdict: Verdict,
}
