use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge within {terms} terms")]
    Convergence { terms: usize },

    #[error("invalid specification: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical blow-up at step {step} (t = {time})")]
    NumericalBlowup { step: usize, time: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("replica {replica}{}: {source}", stage.map(|s| format!(", stage {s}")).unwrap_or_default())]
    Replica {
        replica: usize,
        stage: Option<usize>,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_replica(self, replica: usize, stage: Option<usize>) -> Self {
        Error::Replica {
            replica,
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Replica { source, .. } => source.is_numerical(),
            e => matches!(
                e,
                Error::NumericalBlowup { .. } | Error::Convergence { .. } | Error::InvariantViolation(_)
            ),
        }
    }
}
