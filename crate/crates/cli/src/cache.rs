//! Content-addressed store of coarse-grained matrices, one JSON file per cube.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use parahom_core::coarsegrain::{coarse_grain_cube, CoarseGrained};
use parahom_core::fields::{generate, FieldSpec};
use parahom_core::geometry::ParabolicCube;
use parahom_core::pde::MeshPolicy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub version: String,
    pub created_at: u64,
    pub payload: CoarseGrained,
}

pub struct Cache {
    dir: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

pub fn cache_key(spec: &FieldSpec, cube: &ParabolicCube, policy: &MeshPolicy) -> String {
    let mut h = Sha256::new();
    for part in [spec.canonical(), cube.id(), policy.key(), CODE_VERSION.to_string()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

impl Cache {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// A corrupt or foreign entry is removed and reported as missing.
    pub fn get(&self, key: &str) -> io::Result<Option<CoarseGrained>> {
        let path = self.path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.key == key && entry.version == CODE_VERSION => Ok(Some(entry.payload)),
            _ => {
                log::warn!("dropping corrupt cache entry {}", path.display());
                match fs::remove_file(&path) {
                    Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
                    _ => Ok(None),
                }
            }
        }
    }

    /// Writes to a temporary file in the cache directory and renames it into place.
    pub fn put(&self, key: &str, payload: &CoarseGrained) -> io::Result<()> {
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CacheEntry { key: key.to_string(), version: CODE_VERSION.to_string(), created_at, payload: payload.clone() };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, &entry)?;
        tmp.flush()?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }

    /// Cached coarse-graining of one cube.
    pub fn coarse_grain(&self, spec: &FieldSpec, cube: &ParabolicCube, policy: &MeshPolicy) -> parahom_core::Result<CoarseGrained> {
        let key = cache_key(spec, cube, policy);
        if let Some(cg) = self.get(&key)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(cg);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let cg = coarse_grain_cube(&generate(spec)?, cube, policy)?;
        self.put(&key, &cg)?;
        Ok(cg)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}
