use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration diverged: non-finite derivative at t = {t}")]
    IntegrationDiverged { t: f64 },

    #[error("invalid covariance: minimum eigenvalue {min_eigenvalue:e} is below -1e-9")]
    InvalidCovariance { min_eigenvalue: f64 },

    #[error(
        "degenerate coupling (det G = {delta:e}): the non-orthogonal basis needs det G != 0, \
         use the QND transform instead"
    )]
    DegenerateCoupling { delta: f64 },

    #[error("unsupported degeneracy: {0}")]
    UnsupportedDegeneracy(String),

    #[error(
        "numerical instability at t = {t}: covariance eigenvalue {min_eigenvalue:e} is below \
         -1e-9, try a smaller dt"
    )]
    NumericalInstability { t: f64, min_eigenvalue: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("closed form unavailable: {0}")]
    ClosedFormUnavailable(String),

    #[error("invalid information value at t = {t}: log argument {argument:e} is not positive")]
    InvalidInformation { t: f64, argument: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_error(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Error {
    Error::Shape {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
