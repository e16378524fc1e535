//! Declarative experiments: a config names a kernel, a φ-function, a signal
//! and a domain; the runners assemble the operators, check the error
//! estimates row by row over an n-grid and produce CSV/JSON reports.

pub mod config;
pub mod ledger;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, OutputPaths};
pub use ledger::{BoundLedger, BoundRow, KLedger, KRow, RateFit, Verdict, SLACK_TOLERANCE};
pub use report::{emit_reports, Tabular};
pub use run::{
    operator_error_modular, run_kfunctional_bound, run_lipschitz_rate, run_shifted_variant,
    run_theorem_bound_real_line,
};
