//! Stage-output cache: one file per (image, stage) under a directory named
//! by the config fingerprint, so any config change invalidates everything at
//! once. Writes go to a unique temp file and rename into place, which keeps
//! concurrent writers and killed runs from leaving torn entries.

use super::PipelineError;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    A,
    B,
    C,
}

impl Stage {
    pub fn suffix(self) -> &'static str {
        match self {
            Stage::A => "a",
            Stage::B => "b",
            Stage::C => "c",
        }
    }
}

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct CacheStore {
    root: PathBuf,
}

impl CacheStore {
    pub fn new(cache_dir: &Path, fingerprint: &str) -> Self {
        CacheStore { root: cache_dir.join(fingerprint) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, image_id: &str, stage: Stage) -> Result<PathBuf, PipelineError> {
        if image_id.is_empty()
            || image_id.contains(['/', '\\'])
            || image_id.contains("..")
            || image_id.starts_with('.')
        {
            return Err(PipelineError::BadImageId { id: image_id.to_string() });
        }
        Ok(self.root.join(format!("{image_id}.{}", stage.suffix())))
    }

    pub fn load(&self, image_id: &str, stage: Stage) -> Result<Option<Vec<u8>>, PipelineError> {
        let path = self.entry_path(image_id, stage)?;
        match std::fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(PipelineError::CacheIo { path, source }),
        }
    }

    pub fn store(&self, image_id: &str, stage: Stage, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.entry_path(image_id, stage)?;
        let io_err = |path: PathBuf| move |source| PipelineError::CacheIo { path, source };
        std::fs::create_dir_all(&self.root).map_err(io_err(self.root.clone()))?;
        let temp = self.root.join(format!(
            ".tmp-{}-{}-{image_id}.{}",
            std::process::id(),
            TEMP_SEQ.fetch_add(1, Ordering::Relaxed),
            stage.suffix()
        ));
        std::fs::write(&temp, bytes).map_err(io_err(temp.clone()))?;
        std::fs::rename(&temp, &path).map_err(io_err(path))
    }
}
