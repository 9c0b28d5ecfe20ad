use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every hypothesis received zero mass, or a momentum term diverged.
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    /// Rate constants need at least one hypothesis outside the optimal set.
    #[error("no suboptimal hypothesis: every hypothesis is optimal")]
    NoSuboptimalHypothesis,

    /// A simulation step failed for a specific agent.
    #[error("agent {agent} at step {step}: {source}")]
    Step {
        agent: usize,
        step: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegeneratePosterior(msg.into())
    }
}
