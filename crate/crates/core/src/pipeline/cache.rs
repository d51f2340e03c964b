//! Content-hash stage cache. A stage is skipped when the hash of its name,
//! its configuration and the bytes of its inputs matches the hash recorded
//! after its last successful run and all of its outputs still exist.

use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub struct StageCache {
    dir: PathBuf,
}

fn hash_file(h: &mut Sha256, path: &Path) -> Result<()> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(())
}

/// Hex digest over `stage`, `config` and the content of each input. Inputs
/// are `(label, path)`; a missing path hashes as absent rather than failing.
pub fn stage_key(stage: &str, config: &str, inputs: &[(String, PathBuf)]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0]);
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(config.as_bytes());
    for (label, path) in inputs {
        h.update([0]);
        h.update(label.as_bytes());
        if path.is_file() {
            h.update([1]);
            hash_file(&mut h, path)?;
        } else {
            h.update([2]);
        }
    }
    Ok(hex::encode(h.finalize()))
}

impl StageCache {
    pub fn new(out_dir: &Path) -> Self {
        StageCache { dir: out_dir.join(".cache") }
    }

    fn key_path(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.key"))
    }

    pub fn is_fresh(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> bool {
        outputs.iter().all(|p| p.exists())
            && std::fs::read_to_string(self.key_path(stage)).is_ok_and(|k| k.trim() == key)
    }

    pub fn record(&self, stage: &str, key: &str) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let p = self.key_path(stage);
        std::fs::write(&p, format!("{key}\n")).map_err(|e| Error::io(&p, e))
    }

    pub fn invalidate(&self, stage: &str) {
        let _ = std::fs::remove_file(self.key_path(stage));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_tracks_content_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("in.txt");
        std::fs::write(&f, "a").unwrap();
        let inputs = vec![("in".to_string(), f.clone())];
        let k1 = stage_key("s", "{}", &inputs).unwrap();
        assert_eq!(k1, stage_key("s", "{}", &inputs).unwrap());
        assert_ne!(k1, stage_key("s", "{\"x\":1}", &inputs).unwrap());
        assert_ne!(k1, stage_key("t", "{}", &inputs).unwrap());
        std::fs::write(&f, "b").unwrap();
        assert_ne!(k1, stage_key("s", "{}", &inputs).unwrap());
        let missing = vec![("in".to_string(), dir.path().join("nope"))];
        assert!(stage_key("s", "{}", &missing).is_ok());
    }

    #[test]
    fn freshness_needs_key_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path());
        let out = dir.path().join("o.txt");
        assert!(!cache.is_fresh("s", "k", std::slice::from_ref(&out)));
        cache.record("s", "k").unwrap();
        assert!(!cache.is_fresh("s", "k", std::slice::from_ref(&out)));
        std::fs::write(&out, "").unwrap();
        assert!(cache.is_fresh("s", "k", std::slice::from_ref(&out)));
        assert!(!cache.is_fresh("s", "other", std::slice::from_ref(&out)));
        cache.invalidate("s");
        assert!(!cache.is_fresh("s", "k", &[out]));
    }
}
