use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

/// Writes pretty JSON and parses it back as `T`, so every artifact is
/// checked against its own type on write.
pub fn write_json<T: Serialize + DeserializeOwned>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, &text)?;
    read_json::<T>(path)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub path: String,
    pub sha256: String,
}

/// Digests of `files`, recorded relative to `root`.
pub fn digests(root: &Path, files: &[PathBuf]) -> Result<Vec<ArtifactDigest>> {
    files
        .iter()
        .map(|f| {
            Ok(ArtifactDigest {
                path: f.strip_prefix(root).unwrap_or(f).to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(f)?,
            })
        })
        .collect()
}
