use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {name} = {value} is out of range ({expected})")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("parameter {0} is not supported for this kernel family")]
    ParamUnsupported(&'static str),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eig:e}, largest {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error(
        "quadrature did not reach tolerance {abs_tol:e} (last refinement changed the value by {change:e})"
    )]
    QuadratureNotConverged { abs_tol: f64, change: f64 },

    #[error("series did not converge within {max_terms} terms (tail estimate {tail:e})")]
    SeriesNotConverged { max_terms: usize, tail: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate covariance: v_n = 0")]
    DegenerateCovariance,

    #[error("input must be strictly positive, got {0}")]
    NonpositiveInput(f64),

    #[error("fine grid step {0} is too coarse (must be at most 0.1 and divide 1)")]
    FineGridTooCoarse(f64),

    #[error("at least {min} samples required, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("invalid experiment configuration: {0}")]
    ConfigInvalid(String),

    #[error("cannot fit a rate: {0}")]
    DegenerateFit(&'static str),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    /// Errors caused by the caller's parameters rather than by a failed
    /// computation. The CLI maps these to its usage exit code.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::ParamOutOfRange { .. }
                | Error::ParamUnsupported(_)
                | Error::InvalidGrid(_)
                | Error::ConfigInvalid(_)
                | Error::FineGridTooCoarse(_)
        )
    }
}

pub(crate) fn check_range(name: &'static str, value: f64, ok: bool, expected: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange {
            name,
            value,
            expected,
        })
    }
}
