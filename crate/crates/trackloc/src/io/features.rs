//! Binary feature container: magic `TFV1`, two little-endian u32s (rows T,
//! columns D), then T*D little-endian f32 values row-major. Used both for
//! input features and for emitted score sequences (D = C+1).

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"TFV1";
const HEADER_LEN: usize = 12;

pub fn encode_features(m: &Array2<f64>) -> Result<Vec<u8>> {
    let (t, d) = m.dim();
    if t == 0 || d == 0 {
        return Err(Error::data("feature matrix must be non-empty"));
    }
    if t > u32::MAX as usize || d > u32::MAX as usize {
        return Err(Error::data("feature matrix too large for the container"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * d);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in m.iter() {
        if !v.is_finite() {
            return Err(Error::data("feature values must be finite"));
        }
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Strict decoder for untrusted bytes: checked sizes, exact length, finite
/// values. Values are widened to f64.
pub fn decode_features(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::data("feature file shorter than its header"));
    }
    if bytes[..4] != FEATURE_MAGIC {
        return Err(Error::data("bad feature file magic (want TFV1)"));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if t == 0 || d == 0 {
        return Err(Error::data("feature file declares an empty matrix"));
    }
    let count = t
        .checked_mul(d)
        .ok_or_else(|| Error::data("feature dimensions overflow"))?;
    let expected = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::data("feature dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::data(format!(
            "feature file length {} does not match {t} x {d} ({expected} expected)",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for chunk in bytes[HEADER_LEN..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::data("feature file contains non-finite values"));
        }
        values.push(v as f64);
    }
    Array2::from_shape_vec((t, d), values).map_err(|e| Error::data(e.to_string()))
}

pub fn write_features(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_features(m)?)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    decode_features(&fs::read(path)?)
}
