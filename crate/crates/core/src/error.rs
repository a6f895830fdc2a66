use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} entries, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("variable index {index} out of range for {n_vars} variables")]
    VariableIndex { index: usize, n_vars: usize },

    #[error("LP solver failed after {iterations} iterations: {reason}")]
    SolverFailure { iterations: usize, reason: String },

    #[error("feasibility restoration found no integer-feasible point")]
    RestorationInfeasible,

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error("instance {instance}")]
    Instance {
        instance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn at_instance(self, instance: usize) -> Error {
        Error::Instance {
            instance,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
