use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time runs backwards: {to} precedes {from}")]
    NegativeElapsed { from: f64, to: f64 },

    #[error("kernel rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),

    #[error("unknown topic id {0}")]
    UnknownTopic(usize),

    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("user {user} outside population of size {users}")]
    UserOutOfRange { user: usize, users: usize },

    #[error("event {index} at time {time} does not follow previous time {prev}")]
    NonIncreasingTime { index: usize, prev: f64, time: f64 },

    #[error("event {index} has an empty document (only allowed in times-only mode)")]
    EmptyDocument { index: usize },

    #[error("all particles degenerate at event {event} (t={time}, user={user})")]
    Degenerate {
        event: usize,
        time: f64,
        user: usize,
    },

    #[error(
        "simulation exceeded event cap {cap} at t={time}; influence matrix is likely supercritical"
    )]
    Supercritical { cap: usize, time: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: estimate has {est} entries, truth has {truth}")]
    ShapeMismatch { est: usize, truth: usize },

    #[error("relative error undefined for all-zero truth")]
    ZeroTruth,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
