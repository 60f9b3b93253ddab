//! Output manifest: one `sha256  relative/path` line per emitted file,
//! sorted by path, so identical runs produce identical manifests.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hashes every listed file (paths relative to `dir`) and writes
/// `manifest.txt` into `dir`.
pub fn write_manifest(dir: &Path, rel_paths: &[String]) -> Result<String> {
    let mut sorted = rel_paths.to_vec();
    sorted.sort();
    let mut out = String::new();
    for rel in &sorted {
        let digest = sha256_hex(&fs::read(dir.join(rel))?);
        out.push_str(&digest);
        out.push_str("  ");
        out.push_str(rel);
        out.push('\n');
    }
    fs::write(dir.join("manifest.txt"), &out)?;
    Ok(out)
}
