use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("edge list is empty")]
    EmptyInput,

    #[error("timesteps must be consecutive starting at 1; missing timestep {0}")]
    MissingTimestep(usize),

    #[error("timestep {t} out of range 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },

    #[error("node id {id} out of range (n = {n})")]
    NodeOutOfRange { id: u32, n: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(u32),

    #[error("window p = {window} requires t >= {min_t}, got t = {t}")]
    WindowTooLarge { window: usize, t: usize, min_t: usize },

    #[error("pair features need two distinct nodes, got ({0}, {0})")]
    SamePair(u32),

    #[error("invalid counts: eta_plus = {eta_plus} exceeds eta = {eta}")]
    InvalidCounts { eta: f64, eta_plus: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("datacube binning mismatch: max_bin {left} vs {right}")]
    BinningMismatch { left: u8, right: u8 },

    #[error("cell ({cn_bin}, {ll_bin}) is not part of the index layout")]
    CellOutsideLayout { cn_bin: u8, ll_bin: u8 },

    #[error("index holds no datacubes")]
    EmptyIndex,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("only {candidates:.1} mean candidates at k = 1, fewer than r = {r}; use exact search")]
    InsufficientCandidates { candidates: f64, r: usize },

    #[error("AUC needs at least one positive and one negative label")]
    DegenerateLabels,

    #[error("no source node could be scored")]
    NoScorableSources,

    #[error("sequence too short: {0}")]
    TooShort(String),

    #[error("bad cache file: {0}")]
    BadCache(String),
}
