use serde::{Deserialize, Serialize};

use crate::par::Execution;
use crate::quad::QuadSpec;

/// Smallest accepted value of `a_chi`; kernels at or below it are rejected for
/// the corresponding domain flavor.
pub const A_CHI_MIN: f64 = 1e-8;

/// Numerical resolution knobs shared by every module. All of them end up in
/// the reports so results can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Step of the uniform grids used for suprema and infima.
    pub sup_grid_step: f64,
    pub quad: QuadSpec,
    /// Half-width of the window on which `‖χ‖₁` is integrated before the tail is closed.
    pub l1_truncation: f64,
    /// Number of positive shifts per sign in the modulus-of-smoothness h-grid.
    pub h_points: usize,
    /// Quadrature breakpoints per operator cell `[k/n, (k+1)/n]`.
    pub cell_density: usize,
    /// Grid size used to measure `‖g'‖_∞` of K-functional candidates.
    pub derivative_grid: usize,
    /// Geometric grid density for the φ-function certificate.
    pub convexity_points_per_decade: usize,
    pub exec: Execution,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            sup_grid_step: 1e-3,
            quad: QuadSpec::default(),
            l1_truncation: 256.0,
            h_points: 32,
            cell_density: 2,
            derivative_grid: 1 << 14,
            convexity_points_per_decade: 50,
            exec: Execution::default(),
        }
    }
}

impl Resolution {
    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}
