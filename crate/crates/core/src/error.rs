use thiserror::Error;

/// Errors raised anywhere in the discretize → relax → solve → extract pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("variable {0} has no substitution")]
    UnmappedVariable(u32),
    #[error("no value supplied for variable {0}")]
    MissingValue(u32),
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("element kind {kind} cannot represent derivative symbol `{symbol}`")]
    UnsupportedSymbol { kind: String, symbol: String },
    #[error("element kind {kind} is incompatible with a {dim}D mesh")]
    IncompatibleKind { kind: String, dim: usize },
    #[error("relaxation order {omega} too small: need 2*omega >= {required}")]
    OrderTooSmall { omega: usize, required: usize },
    #[error("graph is not chordal under the supplied elimination ordering")]
    NotChordal,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("malformed SDP: {0}")]
    Malformed(String),
    #[error("solver reported infeasibility")]
    Infeasible,
    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("spec error (line {line}): {message}")]
    Spec { line: usize, message: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
