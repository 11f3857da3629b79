use thiserror::Error;

use crate::grid::Coord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid stream length {0}: must be even and at least 2")]
    InvalidLength(usize),

    #[error("stream source broke its contract: {0}")]
    SourceContractViolation(String),

    #[error("position {position} queried after position {last} in the same stream")]
    Revisit { position: usize, last: usize },

    #[error("position {position} out of range for stream of length {len}")]
    OutOfRange { position: usize, len: usize },

    #[error("exhaustive oracle supports n <= {max}, got {n}")]
    Size { n: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario parse error on line {line}: {msg}")]
    Scenario { line: usize, msg: String },

    #[error("two transmitters within interference range of {receiver:?} at step {step}")]
    CollisionViolation { receiver: Coord, step: u64 },

    #[error("fingerprint phase stalled: {stalled} correct node(s) never reached the attestation threshold, first at {first:?}")]
    FingerprintPhaseStall { stalled: usize, first: Coord },

    #[error("data phase stalled at {node:?}: {reason}")]
    DataPhaseStall { node: Coord, reason: String },

    #[error("fault plan rejected: {0}")]
    FaultPlan(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
