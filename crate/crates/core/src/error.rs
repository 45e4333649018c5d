use thiserror::Error;

/// Errors raised by the scheduling model and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Some user receives zero bits, so the log-utility is -inf.
    #[error("degenerate schedule: user {user} receives {bits} bits")]
    Degenerate { user: usize, bits: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Round-robin assignment leaves a user without any slot (K < N).
    #[error("user {user} receives no slot ({slots} slots for {users} users)")]
    StarvedUser {
        user: usize,
        slots: usize,
        users: usize,
    },

    #[error("invalid setup: {0}")]
    Setup(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
