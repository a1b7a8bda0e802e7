//! Crate-wide error type.

/// Everything that can go wrong across the simulator.
///
/// Solver-level conditions that are *expected* outcomes (an infeasible
/// device/channel pair, an empty round) are not errors; they are encoded in
/// the respective result types. `Error` covers contract violations, broken
/// configuration, and genuinely exceptional numerics.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration could not be parsed or failed validation.
    #[error("config: {0}")]
    Config(String),

    /// A time/energy evaluation was asked for a degenerate allocation
    /// (e.g. `tau = 0`, which would mean zero compute capacity).
    #[error("degenerate allocation: {0}")]
    Degenerate(&'static str),

    /// Transmission rate is zero; the upload can never complete.
    #[error("zero transmission rate: upload cannot complete")]
    ZeroRate,

    /// No point of the projection ray lies inside the energy budget.
    #[error("no feasible point on the projection ray")]
    InfeasibleRay,

    /// The outer-approximation loop hit its defensive iteration cap.
    #[error("allocation solver did not converge within {0} iterations")]
    NoConvergence(usize),

    /// Every scheduled device was dropped; the round carries no upload.
    #[error("round has no assigned device")]
    EmptyRound,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
