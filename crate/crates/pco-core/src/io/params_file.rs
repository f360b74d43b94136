//! Loading [`ModelParams`] from JSON files.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::params::{ModelParams, ParamError};

/// Failure to load or validate a parameter file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid parameter file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ParamError),
}

/// Parses and validates a JSON parameter document.
pub fn parse_params_str(text: &str) -> Result<ModelParams, LoadError> {
    let params: ModelParams = serde_json::from_str(text)?;
    params.validate()?;
    Ok(params)
}

/// Reads, parses, and validates the parameter file at `path`.
pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_params_str(&text)
}
