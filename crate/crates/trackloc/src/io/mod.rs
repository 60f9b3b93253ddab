//! On-disk formats: JSON-lines tracks / ground truth / detections, the
//! binary feature and checkpoint containers, the run-config grammar, and
//! the CSV reports. Every decoder validates untrusted input and returns
//! errors instead of panicking.

pub mod checkpoint;
pub mod config;
pub mod features;
pub mod jsonl;
pub mod manifest;
pub mod results;

use crate::error::{Error, Result};

/// Identifiers are embedded in output file names; restrict them to a safe
/// charset so keys stay valid paths.
pub(crate) fn validate_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.len() > 128 {
        return Err(Error::data(format!("{kind} id must be 1..=128 characters")));
    }
    if !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')) {
        return Err(Error::data(format!(
            "{kind} id {id:?} contains characters outside [A-Za-z0-9._-]"
        )));
    }
    Ok(())
}
