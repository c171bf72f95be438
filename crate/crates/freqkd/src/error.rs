use thiserror::Error;

use crate::mode_engine::PathId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("occupied path {0:?} has no detector assignment")]
    UnassignedPath(PathId),

    #[error("time bins misaligned at the return coupler: long arm at {long_bin}, short arm at {short_bin}")]
    TimeMisaligned { long_bin: u64, short_bin: u64 },

    #[error("topology has no leaves")]
    EmptyTopology,

    #[error("leaves {a} and {b} have round-trip bins within the timing resolution ({bins_a} vs {bins_b}, resolution {resolution})")]
    DuplicateRange {
        a: u32,
        b: u32,
        bins_a: u64,
        bins_b: u64,
        resolution: u64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
