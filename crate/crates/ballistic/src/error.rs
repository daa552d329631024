use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("hamiltonian is unbounded: {0}")]
    UnboundedHamiltonian(String),

    #[error("unbounded below: {0}")]
    UnboundedBelow(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("map undefined at atom {index} ({point:?})")]
    MapUndefined { index: usize, point: Vec<f64> },

    #[error("malformed measure file, line {line}: {msg}")]
    MalformedFile { line: usize, msg: String },

    #[error("config error, line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
