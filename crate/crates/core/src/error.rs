//! Crate-wide error type.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the numerical routines.
///
/// Each variant names the violated contract; messages carry the concrete
/// quantities so callers can report actionable diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A requested tolerance could not be met after exhausting refinement.
    ToleranceNotMet {
        what: String,
        achieved: f64,
        required: f64,
    },
    /// The density cannot be factorized (log-integral diverges, too many zeros).
    NotFactorizable { reason: String },
    /// A factor is numerically singular where it must be inverted.
    SingularFactor { min_modulus: f64 },
    /// A summability or decay condition required by an operator fails.
    ConditionViolated { what: String },
    /// An argument lies outside the operation's domain.
    DomainError { what: String },
    /// A mismatch integrand diverges (density vanishes where the numerator does not).
    DivergentIntegrand { lambda: f64 },
    /// No stationary vector satisfying the class constraints was found.
    NoValidStationaryPoint { detail: String },
    /// Operator truncation is unstable (result changes materially when doubled).
    TruncationUnstable { rel_change: f64 },
    /// Fixed-point iteration failed to converge within its budget.
    FixedPointDiverged { iterations: usize, residual: f64 },
    /// Moment constraints admit no positive density.
    MomentInfeasible { detail: String },
    /// The two-term closed form degenerates (one of its coupling terms is zero).
    DegenerateXY { x: f64, y: f64 },
    /// Class bounds are mutually inconsistent.
    InfeasibleBounds { detail: String },
    /// Simulated paths are shorter than the filter horizon requires.
    HorizonExceeded { needed: usize, available: usize },
    /// File or parse failure for CSV/JSON payloads.
    Io { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ToleranceNotMet {
                what,
                achieved,
                required,
            } => write!(
                f,
                "tolerance not met for {what}: achieved {achieved:.3e}, required {required:.3e}"
            ),
            Error::NotFactorizable { reason } => write!(f, "density not factorizable: {reason}"),
            Error::SingularFactor { min_modulus } => write!(
                f,
                "factor numerically singular on the grid (min modulus {min_modulus:.3e})"
            ),
            Error::ConditionViolated { what } => write!(f, "condition violated: {what}"),
            Error::DomainError { what } => write!(f, "domain error: {what}"),
            Error::DivergentIntegrand { lambda } => write!(
                f,
                "mismatch integrand diverges near lambda = {lambda:.6}"
            ),
            Error::NoValidStationaryPoint { detail } => {
                write!(f, "no valid stationary point: {detail}")
            }
            Error::TruncationUnstable { rel_change } => write!(
                f,
                "operator truncation unstable: doubling changed the result by {rel_change:.3e}"
            ),
            Error::FixedPointDiverged {
                iterations,
                residual,
            } => write!(
                f,
                "fixed point did not converge in {iterations} iterations (residual {residual:.3e})"
            ),
            Error::MomentInfeasible { detail } => write!(f, "moment constraints infeasible: {detail}"),
            Error::DegenerateXY { x, y } => write!(
                f,
                "two-term closed form degenerate: x = {x:.3e}, y = {y:.3e} (both must be nonzero)"
            ),
            Error::InfeasibleBounds { detail } => write!(f, "infeasible class bounds: {detail}"),
            Error::HorizonExceeded { needed, available } => write!(
                f,
                "path too short: filter horizon needs {needed} samples, only {available} available"
            ),
            Error::Io { detail } => write!(f, "io error: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io {
            detail: e.to_string(),
        }
    }
}

impl Error {
    /// True when the error stems from bad input rather than numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DomainError { .. } | Error::Io { .. } | Error::InfeasibleBounds { .. }
        )
    }
}
