//! Crate-wide error type with stable machine-readable codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate ({context})")]
    NonFiniteCoordinate { context: String },
    #[error("point counts differ: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("cyclic parent pointers")]
    CyclicParents,
    #[error("skeleton has no edges")]
    NoEdges,
    #[error("coordinate token {token} out of range for {n_disc} bins")]
    TokenOutOfRange { token: u32, n_disc: u32 },
    #[error("parent token {token} exceeds joint count {joints}")]
    ParentIndexOutOfRange { token: u32, joints: usize },
    #[error("vocabulary size {got} at position {position}, expected {expected}")]
    VocabMismatch {
        position: usize,
        expected: usize,
        got: usize,
    },
    #[error("no scored positions")]
    EmptyPositionSet,
    #[error("logits position {position} outside sequence length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("clip has no mesh frames or faces")]
    NoMesh,
    #[error("mesh has zero total surface area")]
    ZeroAreaMesh,
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("no valid joints")]
    NoValidJoints,
    #[error("mask has no active entries")]
    ZeroMask,
    #[error("no bones among valid joints")]
    NoValidBones,
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("metric needs at least two joints")]
    SingleJoint,
    #[error("empty point set")]
    EmptySet,
    #[error("too few frames: have {got}, need {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("teacher rows are not row-stochastic over valid joints (row {row})")]
    NotRowStochastic { row: usize },
    #[error("bad magic in logits file")]
    BadMagic,
    #[error("truncated logits file")]
    Truncated,
    #[error("clip format: {0}")]
    ClipFormat(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable code for machine consumption (CLI error JSON, skip records).
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            NonFiniteCoordinate { .. } => "NONFINITE_COORDINATE",
            CountMismatch { .. } => "COUNT_MISMATCH",
            CyclicParents => "CYCLIC_PARENTS",
            NoEdges => "NO_EDGES",
            TokenOutOfRange { .. } => "TOKEN_OUT_OF_RANGE",
            ParentIndexOutOfRange { .. } => "PARENT_INDEX_OUT_OF_RANGE",
            VocabMismatch { .. } => "VOCAB_MISMATCH",
            EmptyPositionSet => "EMPTY_POSITION_SET",
            PositionOutOfRange { .. } => "POSITION_OUT_OF_RANGE",
            NoMesh => "NO_MESH",
            ZeroAreaMesh => "ZERO_AREA_MESH",
            ShapeMismatch { .. } => "SHAPE_MISMATCH",
            NoValidJoints => "NO_VALID_JOINTS",
            ZeroMask => "ZERO_MASK",
            NoValidBones => "NO_VALID_BONES",
            NonFiniteGradient => "NONFINITE_GRADIENT",
            SingleJoint => "SINGLE_JOINT",
            EmptySet => "EMPTY_SET",
            TooFewFrames { .. } => "TOO_FEW_FRAMES",
            InvalidConfig(_) => "INVALID_CONFIG",
            Diverged { .. } => "DIVERGED",
            NotRowStochastic { .. } => "NOT_ROW_STOCHASTIC",
            BadMagic => "BAD_MAGIC",
            Truncated => "TRUNCATED",
            ClipFormat(_) => "CLIP_FORMAT",
            Io(_) => "IO",
            Json(_) => "JSON",
        }
    }
}
