use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("invalid potential value {value} at time {t}")]
    InvalidPotential { t: usize, value: f64 },

    #[error("estimator requires N >= 2 (got N = {0})")]
    TooFewParticles(usize),

    #[error("ring capacity exceeded: lag {lag} > capacity {capacity}")]
    RingCapacityExceeded { lag: usize, capacity: usize },

    #[error("backward kernel undefined: row {row} has a zero normalizing sum")]
    BackwardKernelUndefined { row: usize },

    #[error("PaRIS requires M > 1 (got M = {0})")]
    ParisDrawCount(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step mismatch: statistics at t = {stats}, input at t = {input}")]
    StepMismatch { stats: usize, input: usize },

    #[error("mask enumeration refused at t = {t}: limit is t <= {limit}")]
    MaskHorizon { t: usize, limit: usize },

    #[error("replication requires at least 2 replicates (got {0})")]
    TooFewReplicates(usize),

    #[error("reference value must be positive (got {0})")]
    NonPositiveReference(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown estimator key `{0}`")]
    UnknownEstimator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
