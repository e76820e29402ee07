use thiserror::Error;

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical and I/O failures.
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] qsmooth_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qsmooth_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(
                E::Shape { .. }
                | E::InvalidArgument(_)
                | E::DegenerateCoupling { .. }
                | E::UnsupportedDegeneracy(_)
                | E::InvalidModel(_)
                | E::ClosedFormUnavailable(_),
            ) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}
