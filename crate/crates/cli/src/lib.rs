//! File formats and configuration plumbing behind the `nucseg` binary.
//!
//! Float rasters travel as [`raster_file`] blobs, point sets as CSV,
//! supervised pixel pairs as [`pairs_file`] blobs, and images or instance
//! maps optionally as PNG.

pub mod commands;
pub mod config;
pub mod pairs_file;
pub mod png;
pub mod points;
pub mod raster_file;
pub mod trimask;

use std::path::PathBuf;

/// Failure class of a command, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config values, or an unusable combination of inputs.
    #[error("{0}")]
    Usage(String),
    /// Malformed or inconsistent input data.
    #[error(transparent)]
    Data(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl From<nucseg_core::Error> for CliError {
    fn from(e: nucseg_core::Error) -> Self {
        match e {
            nucseg_core::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.into()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// True when the path names a PNG file.
pub fn is_png(path: &std::path::Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads non-empty, non-comment lines of a batch list, splitting each on
/// whitespace.
pub fn read_list(path: &std::path::Path) -> anyhow::Result<Vec<Vec<PathBuf>>> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::Error::from(e).context(path.display().to_string()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(PathBuf::from).collect())
        .collect())
}
