use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::GatewayError;

/// Content-addressed response store: `{dir}/{fp[..2]}/{fp}.txt`.
///
/// Writes go through a temp file and an atomic rename, so concurrent writers
/// of the same fingerprint end with one complete file (last write wins).
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| GatewayError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, fingerprint: &str) -> PathBuf {
        let shard = fingerprint.get(..2).unwrap_or("__");
        self.dir.join(shard).join(format!("{fingerprint}.txt"))
    }

    pub fn get(&self, fingerprint: &str) -> Option<String> {
        fs::read_to_string(self.path_for(fingerprint)).ok()
    }

    pub fn put(&self, fingerprint: &str, content: &str) -> Result<(), GatewayError> {
        let path = self.path_for(fingerprint);
        let shard = path.parent().expect("cache path has a parent");
        let io = |source| GatewayError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(shard).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(shard).map_err(io)?;
        tmp.write_all(content.as_bytes()).map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }
}
