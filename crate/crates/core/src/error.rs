//! Error type shared by all modules of the crate.

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A (series, period) pair appeared more than once in the input records.
    #[error("duplicate record for series '{series_id}' at period {period}")]
    DuplicateRecord {
        /// Offending series identifier.
        series_id: String,
        /// Offending period.
        period: u64,
    },
    /// An observed value was NaN or infinite.
    #[error("non-finite value for series '{series_id}' at period {period}")]
    NonFiniteValue {
        /// Offending series identifier.
        series_id: String,
        /// Offending period.
        period: u64,
    },
    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// What the operation required.
        expected: String,
        /// What it received.
        actual: String,
    },
    /// A hyperparameter violates its domain.
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    /// A hierarchy node does not resolve to a catalog series.
    #[error("unknown node id '{0}'")]
    UnknownNode(String),
    /// A hierarchy edge loops back onto its own node.
    #[error("self-loop on node '{0}'")]
    SelfLoop(String),
    /// The same directed edge was declared twice.
    #[error("duplicate edge '{src}' -> '{dst}'")]
    DuplicateEdge {
        /// Edge source node id.
        src: String,
        /// Edge destination node id.
        dst: String,
    },
    /// A hierarchy edge carries a weight that is not strictly positive.
    #[error("non-positive weight {weight} on edge '{src}' -> '{dst}'")]
    NonPositiveWeight {
        /// Edge source node id.
        src: String,
        /// Edge destination node id.
        dst: String,
        /// Offending weight.
        weight: f64,
    },
    /// Tree-like in-degrees but some nodes are unreachable from the root.
    #[error("cyclic level structure: node '{0}' is unreachable from the root")]
    CyclicLevels(String),
    /// The operation needs a leveled tree hierarchy and the graph is not one.
    #[error("non-tree hierarchy: {0}")]
    NonTreeHierarchy(String),
    /// A loadings column has too few observations to determine its solution.
    #[error("underdetermined column {0}: fewer observations than factors and no ridge term")]
    UnderdeterminedColumn(usize),
    /// A factor row is touched by no observation and no penalty.
    #[error("unconstrained factor row {0}")]
    UnconstrainedFactorRow(usize),
    /// The autoregression normal equations are singular.
    #[error("degenerate lag matrix for factor {0}")]
    DegenerateLagMatrix(usize),
    /// Child histories sum to zero, so proration shares are undefined.
    #[error("no basis for proration under node '{0}': child histories sum to zero")]
    NoProrationBasis(String),
    /// Proration weights must sum to one.
    #[error("proration weights sum to {0}, expected 1")]
    WeightSumViolation(f64),
    /// A node required by the reconciliation is missing a forecast.
    #[error("missing forecast for level-{level} node '{node}'")]
    MissingLevelForecast {
        /// Hierarchy level of the node.
        level: usize,
        /// Node id.
        node: String,
    },
    /// Seasonal indices need complete cycles.
    #[error("series length {len} is not a positive multiple of season length {season}")]
    IncompleteCycles {
        /// Observed series length.
        len: usize,
        /// Requested season length.
        season: usize,
    },
    /// Ratio-to-mean indices are undefined for a non-positive mean.
    #[error("series mean {0} is not positive")]
    NonPositiveMean(f64),
    /// A computed seasonal index fell outside (0, inf).
    #[error("non-positive seasonal index {value} at position {position}")]
    NonPositiveIndex {
        /// Offending index value.
        value: f64,
        /// 1-based season position.
        position: usize,
    },
    /// Paired vectors of different lengths, or an empty pair.
    #[error("length mismatch: forecast has {forecast} entries, actual has {actual}")]
    LengthMismatch {
        /// Forecast vector length.
        forecast: usize,
        /// Actual vector length.
        actual: usize,
    },
    /// An operation received an empty input it cannot score.
    #[error("empty input: {0}")]
    EmptyInput(String),
    /// The series is too short for the requested backtest layout.
    #[error("insufficient history: need more than {needed} periods, have {have}")]
    InsufficientHistory {
        /// Minimum exclusive period count.
        needed: usize,
        /// Available period count.
        have: usize,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
