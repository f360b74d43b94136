//! Property-list files: one PCTL formula per line, `#` starts a comment.

use thiserror::Error;

use crate::analysis::pctl::{parse_pctl, PctlFormula, PctlParseError};

/// One parsed property together with its source position and text.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyLine {
    /// 1-based line number in the source file.
    pub line: usize,
    /// The formula text with comments and surrounding whitespace removed.
    pub text: String,
    pub formula: PctlFormula,
}

/// A parse failure with its line number.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {source}")]
pub struct PropertyFileError {
    pub line: usize,
    #[source]
    pub source: PctlParseError,
}

/// Strips an unquoted `#` comment from a line.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (idx, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..idx],
            _ => {}
        }
    }
    line
}

/// Parses a property file into its formulas, skipping blank lines and
/// comments.
pub fn parse_properties(text: &str) -> Result<Vec<PropertyLine>, PropertyFileError> {
    let mut properties = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let text = strip_comment(raw).trim();
        if text.is_empty() {
            continue;
        }
        let formula = parse_pctl(text).map_err(|source| PropertyFileError { line, source })?;
        properties.push(PropertyLine {
            line,
            text: text.to_string(),
            formula,
        });
    }
    Ok(properties)
}
