use thiserror::Error;

/// Rejected configuration values.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cw_min must be a power of two and at least 2, got {0}")]
    CwMin(u32),
    #[error("max_stage {0} is too large (window 2^s * cw_min must fit in 32 bits)")]
    MaxStage(u32),
    #[error("retry_limit must be at least 1")]
    RetryLimit,
    #[error("illegal protocol variant: {0}")]
    Variant(String),
    #[error("unknown protocol variant name `{0}`")]
    VariantName(String),
    #[error("timing parameter `{0}` must be strictly positive")]
    Timing(&'static str),
    #[error("traffic: {0}")]
    Traffic(String),
    #[error("a world needs at least one station")]
    NoStations,
}

/// Errors raised by the slot engine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("a run needs at least one slot")]
    ZeroSlots,
    #[error("convergence window must be at least one slot")]
    ZeroWindow,
}

/// Errors raised by metric computations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("fairness index is undefined for an empty or all-zero allocation")]
    DegenerateAllocation,
    #[error("throughput is undefined for zero elapsed time")]
    ZeroElapsed,
    #[error("confidence interval needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("confidence level must lie in (0, 1)")]
    ConfidenceLevel,
}
