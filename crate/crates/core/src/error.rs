use std::path::PathBuf;

use thiserror::Error;

use crate::orlicz::DomainFlavor;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("could not parse {what} from {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },

    #[error("kernel {kernel}: (chi1) failed, {reason}")]
    Chi1 { kernel: String, reason: String },

    #[error("kernel {kernel}: (chi2) failed on the {flavor:?} window, a_chi = {a_chi:e}")]
    Chi2 {
        kernel: String,
        flavor: DomainFlavor,
        a_chi: f64,
    },

    #[error(
        "kernel {kernel}: generalized moment of order {beta} diverges (decay exponent {theta})"
    )]
    MomentDivergent {
        kernel: String,
        beta: f64,
        theta: f64,
    },

    #[error("kernel {kernel}: (chi4) failed, {reason}")]
    Chi4 { kernel: String, reason: String },

    #[error("phi-function {phi} rejected: {reason}")]
    PhiRejected { phi: String, reason: String },

    #[error("operator denominator {value:e} at x = {x} (n = {n}) is below a_chi = {a_chi:e}; (chi2) or the n-threshold is violated")]
    DenominatorGuard {
        n: u32,
        x: f64,
        value: f64,
        a_chi: f64,
    },

    #[error("n = {n} is not admissible on [{a}, {b}] (smallest admissible n: {}): {reason}", min_n.map_or("none found".to_string(), |m| m.to_string()))]
    NThreshold {
        n: u32,
        min_n: Option<u32>,
        a: f64,
        b: f64,
        reason: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("linear baseline unavailable at x = {x} (n = {n}): kernel sum {sum:e}")]
    BaselineUnavailable { n: u32, x: f64, sum: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("signal {signal} is not certified in the Orlicz space for any tested lambda")]
    NotInSpace { signal: String },

    #[error("empty candidate family")]
    EmptyFamily,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(what: &'static str, input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            what,
            input: input.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(what: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!(
            "{what} must be finite, got {x}"
        )))
    }
}
