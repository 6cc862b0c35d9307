use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ion index {ion} out of range for a register of {n_ions} ions")]
    InvalidIon { ion: usize, n_ions: usize },

    /// A state or process failed one of its structural invariants.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("population {population:.3e} in the top Fock level exceeds the leakage budget {budget:.3e}; increase fock_cutoff")]
    Leakage { population: f64, budget: f64 },

    #[error("detection must go through fluorescence_measure, not apply_pulse")]
    DetectInApplyPulse,

    #[error("requested measurement branch on ion {ion} has zero probability")]
    ZeroProbabilityBranch { ion: usize },

    #[error("exact evolution does not support this noise component: {0}")]
    NotChannelRepresentable(String),

    #[error("at least four linearly independent input states are required (rank {rank})")]
    InsufficientInputs { rank: usize },

    #[error("empty counts table")]
    EmptyCounts,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
