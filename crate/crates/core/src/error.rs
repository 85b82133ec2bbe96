//! Error types shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the simulator and the analysis
/// pipelines. Variants carry enough context to act on programmatically:
/// timing violations name the constraint and the earliest legal time,
/// range errors name the offending row, and so on.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration invariant does not hold; `field` names the culprit.
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// A command was issued before its timing constraint expired.
    #[error("timing violation: {constraint} at {at_ns} ns (earliest legal {earliest_legal_ns} ns)")]
    TimingViolation {
        constraint: &'static str,
        at_ns: u64,
        earliest_legal_ns: u64,
    },

    /// A command was issued in an illegal bank state (e.g. ACT on an open bank).
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    /// A row address outside the device geometry.
    #[error("row {row} out of range (bank holds {rows_per_bank} rows)")]
    OutOfRange { row: usize, rows_per_bank: usize },

    /// Row profiling exhausted its retention budget before finding enough groups.
    #[error("insufficient groups: found {found} of {needed} before t_max")]
    InsufficientGroups { found: usize, needed: usize },

    /// An experiment placed an aggressor inside its own probe set.
    #[error("probe overlap: row {row} is both aggressor and probe")]
    ProbeOverlap { row: usize },

    /// A hammer schedule does not fit the per-interval activation budget.
    #[error("budget exceeded: schedule needs {needed} ACTs per bank but only {budget} fit per interval")]
    BudgetExceeded { needed: u64, budget: u64 },

    /// A measurement could not be brought to a verdict.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// No TRR-attributed refresh was observed within the iteration budget.
    #[error("no TRR detected within {iterations} iterations")]
    NoTrrDetected { iterations: usize },

    /// A sampler-specific measurement was requested on a non-sampler.
    #[error("not a sampler: {0}")]
    NotASampler(String),

    /// A window-specific measurement was requested on a non-window tracker.
    #[error("not window-based: {0}")]
    NotWindowBased(String),

    /// A flip position outside the codeword.
    #[error("bit position {position} out of range for {codeword_bits}-bit codeword")]
    PositionOutOfRange { position: usize, codeword_bits: usize },

    /// Preset or config file could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A named preset does not exist in the catalog.
    #[error("unknown preset: {0}")]
    UnknownPreset(String),
}

impl Error {
    /// Convenience constructor for invalid-config errors.
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
