use thiserror::Error;

/// Errors raised by the kernels in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no annotations")]
    NoAnnotations,

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid point set: {0}")]
    InvalidPoints(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no supervised pixels")]
    NoSupervisedPixels,

    #[error("no supervision pairs")]
    NoSupervisionPairs,

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("empty input")]
    EmptyInput,

    #[error("k-means needs k <= samples (k = {k}, samples = {samples})")]
    TooFewSamples { k: usize, samples: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, actual })
    }
}
