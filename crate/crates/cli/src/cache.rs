//! Content-addressed artifact cache.
//!
//! Entries live at `<dir>/<key>.<tag>` where the key is the SHA-256 of the
//! canonical map text, the operation name and its parameters. Each file
//! starts with a line holding the SHA-256 of its body; an entry that fails
//! the check or does not decode is evicted and recomputed. Writes go to a
//! temporary file renamed into place, so readers never see a partial entry.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use holodyn::dynsys::MapSpec;
use sha2::{Digest, Sha256};

use crate::codec::Artifact;
use crate::error::CliError;

const MAGIC: &str = "holodyn-cache v1";

/// Canonical cache key of `(map, operation, params)`.
pub fn cache_key(map: &MapSpec, op: &str, params: &[(&str, String)]) -> String {
    let mut text = map.canonical_text();
    text.push_str(&format!("op={op}\n"));
    let mut params: Vec<_> = params.iter().collect();
    params.sort();
    for (k, v) in params {
        text.push_str(&format!("{k}={v}\n"));
    }
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    write_lock: Mutex<()>,
}

pub enum Outcome<T> {
    Hit(T),
    Miss,
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Cache {
            dir,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            write_lock: Mutex::new(()),
        }
    }

    pub fn disabled() -> Self {
        Self::new(None)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn path<T: Artifact>(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.{}", T::TAG)))
    }

    /// Reads an entry, evicting it if it is corrupt.
    pub fn lookup<T: Artifact>(&self, key: &str) -> Outcome<T> {
        let Some(path) = self.path::<T>(key) else {
            return Outcome::Miss;
        };
        let Ok(text) = fs::read_to_string(&path) else {
            return Outcome::Miss;
        };
        match verify(&text).and_then(|body| T::decode(body).map_err(|e| e.to_string())) {
            Ok(v) => Outcome::Hit(v),
            Err(why) => {
                log::warn!("evicting corrupt cache entry {}: {why}", path.display());
                let _ = fs::remove_file(&path);
                Outcome::Miss
            }
        }
    }

    pub fn store<T: Artifact>(&self, key: &str, value: &T) -> Result<(), CliError> {
        let Some(path) = self.path::<T>(key) else {
            return Ok(());
        };
        let body = value.encode();
        let text = format!(
            "{MAGIC} sha256={}\n{body}",
            hex::encode(Sha256::digest(body.as_bytes()))
        );
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        write_atomic(&path, text.as_bytes())
    }

    /// Cached value for `key`, computing and storing it on a miss.
    pub fn get_or_compute<T, E, F>(&self, key: &str, compute: F) -> Result<T, E>
    where
        T: Artifact,
        E: From<CliError>,
        F: FnOnce() -> Result<T, E>,
    {
        if let Outcome::Hit(v) = self.lookup(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = compute()?;
        self.store(key, &v)?;
        Ok(v)
    }
}

fn verify(text: &str) -> Result<&str, String> {
    let (head, body) = text.split_once('\n').ok_or("missing header")?;
    let sum = head
        .strip_prefix(MAGIC)
        .and_then(|r| r.trim().strip_prefix("sha256="))
        .ok_or("bad header")?;
    if hex::encode(Sha256::digest(body.as_bytes())) != sum {
        return Err("checksum mismatch".into());
    }
    Ok(body)
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("entry");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use holodyn::greenmeas::{exact_quadrature, ExactKind, MeasureSample};

    fn spec(text: &str) -> MapSpec {
        MapSpec::parse(text).unwrap()
    }

    #[test]
    fn equal_maps_share_a_key() {
        let a = spec("degree=2\nP=-1 0 1\nQ=1");
        let b = spec("Q=1.0\ndegree=2\nP=2=1 0=-1.000");
        let params = [("n", "3".to_string()), ("backend", "expand".to_string())];
        let swapped = [params[1].clone(), params[0].clone()];
        assert_eq!(cache_key(&a, "periodic", &params), cache_key(&b, "periodic", &swapped));
        assert_ne!(cache_key(&a, "periodic", &params), cache_key(&a, "tree", &params));
        let c = spec("degree=2\nP=-1 0 1\nQ=2");
        assert_ne!(cache_key(&a, "periodic", &params), cache_key(&c, "periodic", &params));
    }

    #[test]
    fn miss_store_hit_and_eviction() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(Some(dir.path().to_path_buf()));
        let sample = exact_quadrature(ExactKind::Circle, 16);
        let got: MeasureSample = cache.get_or_compute("k", || Ok::<_, CliError>(sample.clone())).unwrap();
        assert_eq!((cache.hits(), cache.misses()), (0, 1));
        let again: MeasureSample = cache
            .get_or_compute("k", || -> Result<_, CliError> { panic!("should hit") })
            .unwrap();
        assert_eq!(again, got);
        assert_eq!(cache.hits(), 1);

        let path = dir.path().join("k.sample");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen("3ff", "3fe", 1)).unwrap();
        assert!(matches!(cache.lookup::<MeasureSample>("k"), Outcome::Miss));
        assert!(!path.exists());
        let fresh: MeasureSample = cache.get_or_compute("k", || Ok::<_, CliError>(sample.clone())).unwrap();
        assert_eq!(fresh, sample);
        assert!(path.exists());
    }

    #[test]
    fn disabled_cache_always_computes() {
        let cache = Cache::disabled();
        let s = exact_quadrature(ExactKind::Circle, 4);
        let _: MeasureSample = cache.get_or_compute("k", || Ok::<_, CliError>(s.clone())).unwrap();
        let _: MeasureSample = cache.get_or_compute("k", || Ok::<_, CliError>(s.clone())).unwrap();
        assert_eq!((cache.hits(), cache.misses()), (0, 2));
    }
}
