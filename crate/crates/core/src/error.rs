use std::io;

use thiserror::Error;

/// Every failure the codec, simulator and container can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("block index out of range")]
    BlockOutOfRange,
    #[error("need at least two keyframes")]
    TooFewKeyframes,
    #[error("need at least two frames")]
    TooFewFrames,
    #[error("no frames")]
    NoFrames,
    #[error("geometry mismatch")]
    GeometryMismatch,
    #[error("frame timestamps must be strictly increasing")]
    NonIncreasingTimestamps,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unexpected end of bitstream")]
    UnexpectedEnd,
    #[error("corrupt coefficient block")]
    CorruptCoefficients,
    #[error("invalid intra mode")]
    InvalidIntraMode,
    #[error("missing reference frame")]
    MissingReference,
    #[error("timestamp outside keyframe interval")]
    TimestampOutsideInterval,
    #[error("motion field does not cover frame")]
    FieldCoverage,
    #[error("invalid rate target")]
    InvalidRateTarget,
    #[error("incomplete GOP")]
    IncompleteGop,
    #[error("dangling reference")]
    DanglingReference,
    #[error("not an EVC stream")]
    NotEvcStream,
    #[error("corrupt header")]
    CorruptHeader,
    #[error("corrupt keyframe payload")]
    CorruptKeyframePayload,
    #[error("corrupt B payload")]
    CorruptBPayload,
    #[error("not an EVT1 event file")]
    NotEventFile,
    #[error("malformed event record: {0}")]
    MalformedEvent(String),
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
