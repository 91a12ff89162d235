use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({i}, {j}, {k}) out of range for dims {dims:?}")]
    Index {
        i: usize,
        j: usize,
        k: usize,
        dims: [usize; 3],
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("target set is empty")]
    EmptyForeground,

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("grid of {voxels} voxels exceeds the brute-force oracle limit of {limit}")]
    OracleSize { voxels: usize, limit: usize },

    #[error("region of interest is empty")]
    EmptyRoi,

    #[error("mask is empty: {0}")]
    EmptyMask(String),

    #[error("invalid phantom spec: {0}")]
    Spec(String),

    #[error("cannot plant {requested} voxels in {region}: only {available} available")]
    InsufficientVoxels {
        region: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("malformed volume file: {0}")]
    Format(String),

    #[error("mask contains value {0} outside {{0, 1}}")]
    NonBinaryMask(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
