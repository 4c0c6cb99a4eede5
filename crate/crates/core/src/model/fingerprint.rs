use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

/// Identifies exactly which model file was audited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFingerprint {
    pub file_name: String,
    pub byte_size: u64,
    /// Last-modified time, ISO-8601 UTC.
    pub modified: String,
    /// SHA-256 of the file bytes, lowercase hex.
    pub content_hash: String,
}

impl ModelFingerprint {
    /// Two fingerprints denote the same model version when their bytes match,
    /// whatever the file is called or when it was touched.
    pub fn same_model(&self, other: &ModelFingerprint) -> bool {
        self.content_hash == other.content_hash && self.byte_size == other.byte_size
    }
}

pub fn fingerprint_bytes(file_name: &str, bytes: &[u8], modified: DateTime<Utc>) -> ModelFingerprint {
    ModelFingerprint {
        file_name: file_name.to_string(),
        byte_size: bytes.len() as u64,
        modified: modified.to_rfc3339_opts(SecondsFormat::Secs, true),
        content_hash: hex::encode(Sha256::digest(bytes)),
    }
}

pub fn fingerprint_model(path: &Path) -> Result<ModelFingerprint, ModelError> {
    let io_err = |source| ModelError::Io { path: path.to_path_buf(), source };
    let bytes = std::fs::read(path).map_err(io_err)?;
    let modified = std::fs::metadata(path).and_then(|m| m.modified()).map_err(io_err)?;
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(fingerprint_bytes(&file_name, &bytes, DateTime::<Utc>::from(modified)))
}
