use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid level schedule: {0}")]
    InvalidSchedule(String),

    #[error(
        "pilot run went extinct at level {level} of {levels} (t = {time}); \
         increase the pilot sample count or reduce the number of pilot levels"
    )]
    PilotExtinct { level: usize, levels: usize, time: f64 },

    #[error("level schedule could not be constructed: {0}")]
    Schedule(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scenario error at {path}: {message}")]
    Scenario { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by the estimation itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidProblem(_)
                | Error::InvalidSchedule(_)
                | Error::Unsupported(_)
                | Error::Scenario { .. }
                | Error::Io(_)
        )
    }
}

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
