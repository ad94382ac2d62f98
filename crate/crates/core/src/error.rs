//! Crate-wide error type.

use thiserror::Error;

use crate::bits::Role;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("ring width {0} out of range (1..=64)")]
    InvalidWidth(u8),

    #[error("chunk width {q} must divide ring width {width} and lie in 1..=8")]
    ChunkWidth { q: u8, width: u8 },

    #[error("bit vector length mismatch: {left} != {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot reconstruct from two shares owned by {0:?}")]
    SameOwner(Role),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("channel closed by peer")]
    ChannelClosed,

    #[error("unknown frame tag 0x{0:02x}")]
    UnknownTag(u8),

    #[error("expected frame tag 0x{expected:02x}, got 0x{got:02x}")]
    UnexpectedTag { expected: u8, got: u8 },

    #[error("frame payload truncated or malformed")]
    MalformedFrame,

    #[error("offline bundle is missing {0} for this protocol variant")]
    VariantMismatch(&'static str),

    #[error("bundle count {got} does not match chunk count {expected}")]
    BundleCount { expected: usize, got: usize },

    #[error("duplicate subset {0:?} in reuse plan")]
    DuplicateSubset(Vec<usize>),

    #[error("no share available for subset {0:?}")]
    MissingSubset(Vec<usize>),

    #[error("plan covers {plan_vars} variables but the session has {session_vars}")]
    PlanMismatch { plan_vars: usize, session_vars: usize },

    #[error("need {needed} multiplication triples, only {have} available")]
    InsufficientTriples { needed: usize, have: usize },

    #[error("exponent matrix row {row} sums to {sum}, above the {limit}-bit limit")]
    ExponentOverflow { row: usize, sum: u32, limit: u32 },

    #[error("matrix has {0} rows; inclusion-exclusion path is capped at 24 (use the brute-force path)")]
    TooManyRows(usize),

    #[error("matrix has {0} columns; subsets are held in 64-bit masks")]
    TooManyColumns(usize),

    #[error("brute-force enumeration is capped at 20 columns, matrix has {0}")]
    BruteForceTooWide(usize),

    #[error("exponent matrix row {0} has no positive entry")]
    EmptyRow(usize),

    #[error("matrix rows have unequal lengths: row {row} has {got} entries, expected {expected}")]
    RaggedMatrix { row: usize, got: usize, expected: usize },

    #[error("matrix parse error at line {line}, column {column}: {message}")]
    MatrixParse { line: usize, column: usize, message: String },

    #[error("missing randomness for monomial {0:?}")]
    RandomnessGap(Vec<u32>),

    #[error("configuration error: {0}")]
    Config(String),
}
