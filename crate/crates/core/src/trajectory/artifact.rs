//! Self-describing model artifact: a short text header followed by a JSON
//! payload whose length and SHA-256 digest the header records.

use super::TrajectoryModel;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const FORMAT_NAME: &str = "wtraj-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model artifact: {0}")]
    NotAnArtifact(String),
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated artifact: {0}")]
    Truncated(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("model invariant violated: {0}")]
    Invariant(String),
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes `model` into artifact bytes.
pub fn write_model<W: Write>(model: &TrajectoryModel, mut sink: W) -> Result<(), ArtifactError> {
    model.check_invariants().map_err(ArtifactError::Invariant)?;
    let payload = serde_json::to_string_pretty(model).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    write!(
        sink,
        "{FORMAT_NAME}\nformat_version: {FORMAT_VERSION}\npayload_bytes: {}\npayload_sha256: {}\n\n{payload}",
        payload.len(),
        digest(payload.as_bytes())
    )?;
    Ok(())
}

fn header_field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, ArtifactError> {
    let line = line.ok_or_else(|| ArtifactError::Truncated(format!("header ends before `{key}`")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(": "))
        .ok_or_else(|| ArtifactError::NotAnArtifact(format!("expected `{key}: …`, found `{line}`")))
}

/// Parses and validates artifact bytes. Nothing is returned unless the
/// version, length, digest, payload and every model invariant check out.
pub fn read_model<R: Read>(mut source: R) -> Result<TrajectoryModel, ArtifactError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let Some(split) = bytes.windows(2).position(|w| w == b"\n\n") else {
        if bytes.starts_with(FORMAT_NAME.as_bytes()) {
            return Err(ArtifactError::Truncated("header is incomplete".into()));
        }
        return Err(ArtifactError::NotAnArtifact("missing header".into()));
    };
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| ArtifactError::NotAnArtifact("header is not UTF-8".into()))?;
    let payload = &bytes[split + 2..];
    let mut lines = header.lines();
    if lines.next() != Some(FORMAT_NAME) {
        return Err(ArtifactError::NotAnArtifact(format!("first line must be `{FORMAT_NAME}`")));
    }
    let version: u32 = header_field(lines.next(), "format_version")?
        .parse()
        .map_err(|_| ArtifactError::NotAnArtifact("format_version is not an integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(ArtifactError::UnsupportedVersion(version));
    }
    let expected: usize = header_field(lines.next(), "payload_bytes")?
        .parse()
        .map_err(|_| ArtifactError::NotAnArtifact("payload_bytes is not an integer".into()))?;
    let sha = header_field(lines.next(), "payload_sha256")?;
    if payload.len() < expected {
        return Err(ArtifactError::Truncated(format!("payload has {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(ArtifactError::Integrity(format!("{} bytes after the payload", payload.len() - expected)));
    }
    if digest(payload) != sha {
        return Err(ArtifactError::Integrity("payload digest does not match the header".into()));
    }
    let model: TrajectoryModel =
        serde_json::from_slice(payload).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    model.check_invariants().map_err(ArtifactError::Invariant)?;
    Ok(model)
}

/// Writes the artifact next to `path` and renames it into place.
pub fn save_model(model: &TrajectoryModel, path: &Path) -> Result<(), ArtifactError> {
    let mut bytes = Vec::new();
    write_model(model, &mut bytes)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrajectoryModel, ArtifactError> {
    read_model(fs::File::open(path)?)
}
