//! Max-product Kantorovich sampling operators in Orlicz spaces.
//!
//! The crate provides generalized kernels with numerical verification of
//! their structural conditions, φ-functions and modular functionals,
//! the max-product operators on the real line and on compact intervals,
//! moduli of smoothness and K-functionals, and an experiment harness that
//! checks the quantitative error estimates for these operators.

// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod format;
pub mod harness;
pub mod kernels;
pub mod operators;
pub mod optimize;
pub mod orlicz;
pub mod par;
pub mod quad;
pub mod settings;
pub mod signal;
pub mod smoothness;

pub use error::{Error, Result};
pub use kernels::{Chi4Report, Kernel, KernelDef, KernelReport};
pub use operators::{kantorovich_mean, OperatorInstance, PreparedOperator};
pub use orlicz::{Domain, DomainFlavor, ModularReport, PhiFunction};
pub use par::Execution;
pub use settings::Resolution;
pub use signal::Signal;
