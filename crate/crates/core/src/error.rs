use thiserror::Error;

/// Errors produced by the matching kernels.
///
/// Data-quality problems on an [`crate::Instance`] are deliberately *not*
/// errors; they are collected by [`crate::validate_instance`] as a
/// [`crate::ValidationReport`]. The variants here are contract violations:
/// mismatched sizes, unsupported operations, or numerical dead ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("length mismatch: {context} (expected {expected}, got {got})")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid map: source atom {source} (weight {weight}) points at z index {target}, grid has {len} atoms")]
    InvalidMap {
        source: usize,
        target: usize,
        weight: f64,
        len: usize,
    },

    #[error("table costs do not support {op}")]
    TableUnsupported { op: &'static str },

    #[error("table cost spec is missing its value matrix")]
    MissingTable,

    #[error("power-family gradient is singular at coincident points (atom pair {source}, {target})")]
    SingularPoint { source: usize, target: usize },

    #[error("non-finite value in {context}; check cost tables and prices")]
    NonFinite { context: &'static str },

    #[error("price vector contains a non-finite entry at index {index}")]
    NonFinitePrice { index: usize },

    #[error(
        "weights are not integral at mass scale {scale}{}",
        .suggested.map(|s| format!(" (try --mass-scale {s})")).unwrap_or_default()
    )]
    NonIntegralMass { scale: u64, suggested: Option<u64> },

    #[error("network is unbalanced: total supply {supply} != total demand {demand}")]
    UnbalancedNetwork { supply: i64, demand: i64 },

    #[error("grid is not a regular tensor product: {reason}")]
    IrregularGrid { reason: &'static str },

    #[error("z atom {index} lies on the grid boundary; finite differences need interior atoms")]
    BoundaryAtom { index: usize },

    #[error("grid too small for second differences: axis {axis} has {len} atoms (need at least 3)")]
    GridTooSmall { axis: usize, len: usize },

    #[error("operation needs the quadratic cost pair (u scaled_quadratic sign -1, v scaled_quadratic sign +1 alpha 1)")]
    NotQuadraticPair,

    #[error("operation needs bilinear costs on both sides")]
    NotBilinear,

    #[error("monotone pairing oracle precondition failed: {reason}")]
    OraclePrecondition { reason: &'static str },

    #[error("determinants above 3x3 are not supported (grid dimension {dim})")]
    DimTooLarge { dim: usize },

    #[error("instance file: {0}")]
    InstanceFile(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
