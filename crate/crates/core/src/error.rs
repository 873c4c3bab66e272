use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("integration failed at t = {t_reached}: {reason}")]
    Integration { t_reached: f64, reason: String },

    #[error("trajectory too short: need {needed} time units after the transient, have {available}")]
    InsufficientSpan { needed: f64, available: f64 },

    #[error("singular linear system (condition estimate {condition_estimate:.3e})")]
    Singular { condition_estimate: f64 },

    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    #[error("resonance width undefined: tau = {tau}, mu = {mu}, nu = {nu}")]
    WidthDomain { tau: f64, mu: f64, nu: f64 },

    #[error("dressed frame is degenerate (S = 0 and epsilon = 0)")]
    DegenerateFrame,

    #[error("cannot build an initial guess: {0}")]
    Guess(String),

    #[error("at delta = {delta}: {source}")]
    AtDelta {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_delta(self, delta: f64) -> Self {
        Error::AtDelta {
            delta,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::Unsupported(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::AtDelta { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
