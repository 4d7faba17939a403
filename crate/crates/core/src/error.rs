use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports. `Display` renders as `<code>: <detail>`
/// so the CLI can forward it as a machine-parseable line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported-order: {0}")]
    UnsupportedOrder(usize),
    #[error("dimension-mismatch: {0}")]
    DimensionMismatch(String),
    #[error("all-zero-intensity: coded intensity has no positive entry")]
    AllZeroIntensity,
    #[error("singular-snap: condition number {0:e} above threshold")]
    SingularSnap(f64),
    #[error("perturbation-too-large: k = {0}")]
    PerturbationTooLarge(f64),
    #[error("zero-signal: reference has zero power")]
    ZeroSignal,
    #[error("malformed-header: {0}")]
    MalformedHeader(String),
    #[error("size-mismatch: expected {expected} values, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("non-finite: {0}")]
    NonFinite(String),
    #[error("invalid-value: {0}")]
    InvalidValue(String),
    #[error("divergence: loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short kebab-case identifier, the first field of the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnsupportedOrder(_) => "unsupported-order",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::AllZeroIntensity => "all-zero-intensity",
            Error::SingularSnap(_) => "singular-snap",
            Error::PerturbationTooLarge(_) => "perturbation-too-large",
            Error::ZeroSignal => "zero-signal",
            Error::MalformedHeader(_) => "malformed-header",
            Error::SizeMismatch { .. } => "size-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidValue(_) => "invalid-value",
            Error::Divergence { .. } => "divergence",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn dims_err(
    what: &str,
    expected: impl std::fmt::Debug,
    found: impl std::fmt::Debug,
) -> Error {
    Error::DimensionMismatch(format!("{what}: expected {expected:?}, found {found:?}"))
}
