use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Fill state of one selection bucket, reported when reproduction stalls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketFill {
    pub bucket: usize,
    pub filled: usize,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("demonstration ordering not achieved after {attempts} attempts")]
    DegenerateDemo { attempts: usize },
    #[error("dataset too small: {len} trajectories, need at least 2")]
    DatasetTooSmall { len: usize },
    #[error("mutation pool is empty")]
    EmptyMutationPool,
    #[error("reproduction stalled after {attempts} attempts with {accepted} accepted offspring")]
    ReproductionStalled {
        attempts: usize,
        accepted: usize,
        buckets: Vec<BucketFill>,
    },
    #[error("no snippet pair satisfies the minimum margin")]
    EmptyPairs,
    #[error("training diverged at step {step}")]
    Divergence { step: usize },
    #[error("degenerate evaluation set: all ground-truth returns identical")]
    DegenerateEval,
    #[error("environment mismatch: {0}")]
    EnvMismatch(String),
}
