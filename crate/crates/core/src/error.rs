use thiserror::Error;

/// Errors produced by the index engine, tables, policies and simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("spline refinement exceeded the budget of {budget} segments (achieved tolerance {achieved:.3e})")]
    Accuracy { budget: usize, achieved: f64 },

    #[error("value function has no sign change on [{lo}, {hi}]")]
    DomainTooNarrow { lo: f64, hi: f64 },

    #[error("index table entry (T={t}, m={m}) is outside a horizon-{n} table")]
    OutOfRange { t: usize, m: usize, n: usize },

    #[error("table format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("table build failed for horizon {horizon}, T={t}: {source}")]
    TableBuild {
        horizon: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("round {round} exceeds the horizon {horizon}")]
    SequenceExhausted { round: usize, horizon: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
