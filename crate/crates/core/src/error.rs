use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A named entity (technology, material, constraint, ...) does not exist.
    #[error("unknown {kind} '{name}'")]
    Lookup { kind: &'static str, name: String },

    /// Bad or inconsistent configuration / input data.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation called on an object in the wrong state (e.g. dual of a non-optimal solve).
    #[error("state error: {0}")]
    State(String),

    /// The LP kernel could not finish (singular basis, iteration limit).
    #[error("solver failure: {0}")]
    Solver(String),

    /// A pathway step had no feasible solution.
    #[error("step {year} infeasible; violated rows: {}", rows.join(", "))]
    Infeasible { year: u32, rows: Vec<String> },

    /// A pathway step was unbounded; only possible with a malformed dataset.
    #[error("step {year} unbounded")]
    Unbounded { year: u32 },

    /// Error raised while running a named scenario.
    #[error("scenario '{name}': {source}")]
    Scenario {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn lookup(kind: &'static str, name: impl Into<String>) -> Self {
        Error::Lookup {
            kind,
            name: name.into(),
        }
    }

    pub fn in_scenario(self, name: &str) -> Self {
        Error::Scenario {
            name: name.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping scenario context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Infeasible { .. } | Error::Unbounded { .. } => 1,
            Error::Solver(_) => 3,
            _ => 2,
        }
    }
}
