use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for {what}: {value}")]
    InvalidValue { what: &'static str, value: f64 },

    #[error("invalid residue {0:?}")]
    InvalidResidue(char),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("concentration is singular at the source position")]
    SingularPoint,

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureFailure { estimate: f64, error_bound: f64 },

    #[error("{failures_len} field point(s) failed, first at index {first_index}: {first}", failures_len = .0.len(), first_index = .0[0].0, first = .0[0].1)]
    FieldPoints(Vec<(usize, Error)>),

    #[error("start position is outside the mobility domain")]
    OutOfDomain,

    #[error("time {t} s outside trajectory span [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("sequence detection requires a channel impulse response")]
    MissingChannelModel,

    #[error("frame and channel lengths are inconsistent: {0}")]
    LengthInconsistent(String),

    #[error("contingency table has no observations")]
    EmptyObservation,

    #[error("source is not identifiable from these readings: {0}")]
    Unidentifiable(String),

    #[error("refinement did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        best: Box<crate::localization::SourceEstimate>,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("input contains no records")]
    EmptyInput,

    #[error("sequence lengths differ (expected {expected}): {offenders:?}")]
    LengthMismatch {
        expected: usize,
        offenders: Vec<(String, usize)>,
    },

    #[error("codon weights for {0} do not sum to one")]
    InvalidWeights(char),

    #[error("no unmasked data at position {0}")]
    NoData(usize),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
