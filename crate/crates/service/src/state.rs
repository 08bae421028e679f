//! The served model and its atomic replacement.

use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;
use wtraj_core::trajectory::{read_model, write_model, ArtifactError, TrajectoryModel};

/// A validated model with the digest of the artifact bytes it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub model: TrajectoryModel,
    pub artifact_sha256: String,
    pub source: Option<PathBuf>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl LoadedModel {
    pub fn from_bytes(bytes: &[u8], source: Option<PathBuf>) -> Result<Self, ArtifactError> {
        let model = read_model(bytes)?;
        Ok(Self { model, artifact_sha256: sha256(bytes), source })
    }

    pub fn from_path(path: &Path) -> Result<Self, ArtifactError> {
        Self::from_bytes(&std::fs::read(path)?, Some(path.to_path_buf()))
    }

    /// Wraps an in-memory model; the digest is that of its serialized artifact.
    pub fn from_model(model: TrajectoryModel) -> Result<Self, ArtifactError> {
        let mut bytes = Vec::new();
        write_model(&model, &mut bytes)?;
        Ok(Self { model, artifact_sha256: sha256(&bytes), source: None })
    }
}

/// Holds the current model. Each request takes a snapshot, so a swap never
/// affects a request in flight.
#[derive(Debug)]
pub struct ModelStore {
    current: RwLock<Arc<LoadedModel>>,
}

impl ModelStore {
    pub fn new(model: LoadedModel) -> Self {
        Self { current: RwLock::new(Arc::new(model)) }
    }

    pub fn current(&self) -> Arc<LoadedModel> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Installs `model` and returns the one it replaced.
    pub fn replace(&self, model: LoadedModel) -> Arc<LoadedModel> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, Arc::new(model))
    }

    /// Reloads from `path` when its bytes changed. A file that fails to
    /// load leaves the current model in place.
    pub fn reload_from(&self, path: &Path) -> Result<bool, ArtifactError> {
        let bytes = std::fs::read(path)?;
        if sha256(&bytes) == self.current().artifact_sha256 {
            return Ok(false);
        }
        self.replace(LoadedModel::from_bytes(&bytes, Some(path.to_path_buf()))?);
        Ok(true)
    }
}

/// Polls `path` every `interval` and swaps in changed, valid artifacts.
pub async fn watch_artifact(store: Arc<ModelStore>, path: PathBuf, interval: Duration) {
    let mut ticker = tokio::time::interval(interval);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let (s, p) = (store.clone(), path.clone());
        match tokio::task::spawn_blocking(move || s.reload_from(&p)).await {
            Ok(Ok(true)) => {
                tracing::info!(path = %path.display(), sha256 = %store.current().artifact_sha256, "model reloaded")
            }
            Ok(Ok(false)) => {}
            Ok(Err(e)) => tracing::warn!(path = %path.display(), error = %e, "keeping current model"),
            Err(e) => tracing::warn!(error = %e, "reload task failed"),
        }
    }
}
