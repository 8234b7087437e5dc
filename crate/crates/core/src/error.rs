use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Fock truncation leaks {leakage:.3e} of the norm with {n_fock} levels")]
    Truncation { leakage: f64, n_fock: usize },

    #[error("time {t} us lies outside [0, {duration}] us")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("spline coefficient {value:.3} rad/us exceeds the amplitude cap {cap:.3} rad/us")]
    AmplitudeCap { value: f64, cap: f64 },

    #[error("state norm drifted by {drift:.3e} at interval {interval}")]
    NormDrift { drift: f64, interval: usize },

    #[error("density-matrix trace drifted by {drift:.3e} at t = {t:.4} us")]
    TraceDrift { drift: f64, t: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("probability {value} outside [0, 1] in {context}")]
    Probability { value: f64, context: String },

    #[error("Krotov update stayed non-monotonic after {retries} step-weight increases")]
    KrotovStalled { retries: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
