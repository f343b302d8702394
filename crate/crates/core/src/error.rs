use thiserror::Error;

/// Errors raised by the scan-statistic library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("window origin {origin:?} out of range (admissible origins per axis: {limit:?})")]
    OutOfBounds { origin: [usize; 3], limit: [usize; 3] },

    /// `P(Y >= tau) = 0`: the threshold lies beyond the support of the window sum.
    #[error("threshold {tau} exceeds the support of the window sum")]
    EmptySupport { tau: u64 },

    #[error("{what} = {value} lies outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// A denominator in the error-factor formulas is not strictly positive.
    #[error("error bound is not valid here: {0}")]
    BoundValidity(&'static str),

    #[error("theorem inapplicable at {level}: 1 - q = {one_minus_q} exceeds 0.1")]
    TheoremInapplicable { level: &'static str, one_minus_q: f64 },

    #[error("T_{axis} = {region} is not a multiple of m_{axis} - 1 = {step}; use the interpolated approximation")]
    NotDivisible {
        axis: usize,
        region: usize,
        step: usize,
    },

    #[error("significance level {significance} cannot be reached within the window support")]
    Unreachable { significance: f64 },
}

pub type Result<T> = std::result::Result<T, ScanError>;
