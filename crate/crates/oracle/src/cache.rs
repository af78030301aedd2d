//! Persistent map from `variant_id|mask|target|model` to raw probabilities.
//!
//! Probabilities are stored before the log-odds transform, so changing the
//! clamp never invalidates a cache.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::error::{Error, Result};

pub fn cache_key(variant_id: &str, mask: u32, target: &str, model_id: &str) -> Result<String> {
    for (name, part) in [
        ("variant_id", variant_id),
        ("target", target),
        ("model_id", model_id),
    ] {
        if part.contains('|') {
            return Err(Error::Data(format!("{name} {part:?} may not contain '|'")));
        }
    }
    Ok(format!("{variant_id}|{mask}|{target}|{model_id}"))
}

#[derive(Debug, Default)]
pub struct ProbabilityCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<String, f64>>,
    // serializes file writes; readers never wait on it
    writer: Mutex<()>,
}

impl ProbabilityCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) the cache file at `path`, checking every entry.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            parse_entries(&text, &path)?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert_many(&self, items: impl IntoIterator<Item = (String, f64)>) -> Result<()> {
        let mut map = self.entries.write().expect("cache lock poisoned");
        for (key, p) in items {
            check_entry(&key, p)?;
            map.insert(key, p);
        }
        Ok(())
    }

    /// Writes the whole map atomically (temp file + rename). No-op in memory.
    pub fn persist(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let _guard = self.writer.lock().expect("cache writer poisoned");
        let json = {
            let map = self.entries.read().expect("cache lock poisoned");
            serde_json::to_string_pretty(&*map).map_err(|e| Error::Data(e.to_string()))?
        };
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(json.as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

fn parse_entries(text: &str, path: &Path) -> Result<BTreeMap<String, f64>> {
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::CacheIntegrity {
            key: path.display().to_string(),
            reason: format!("not a JSON object of probabilities: {e}"),
        })?;
    let mut out = BTreeMap::new();
    for (key, value) in raw {
        let p = value.as_f64().ok_or_else(|| Error::CacheIntegrity {
            key: key.clone(),
            reason: format!("value {value} is not a number"),
        })?;
        check_entry(&key, p)?;
        out.insert(key, p);
    }
    Ok(out)
}

fn check_entry(key: &str, p: f64) -> Result<()> {
    let parts: Vec<&str> = key.split('|').collect();
    if parts.len() != 4 || parts[1].parse::<u32>().is_err() {
        return Err(Error::CacheIntegrity {
            key: key.to_string(),
            reason: "expected variant_id|mask|target|model".into(),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::CacheIntegrity {
            key: key.to_string(),
            reason: format!("probability {p} is outside (0, 1)"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        assert_eq!(
            cache_key("orig", 5, "teacher", "m").unwrap(),
            "orig|5|teacher|m"
        );
        assert!(cache_key("a|b", 5, "t", "m").is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let cache = ProbabilityCache::open(&path).unwrap();
        let p = 0.123_456_789_012_345_67;
        cache
            .insert_many([(cache_key("v", 3, "t", "m").unwrap(), p)])
            .unwrap();
        cache.persist().unwrap();
        let back = ProbabilityCache::open(&path).unwrap();
        assert_eq!(back.get("v|3|t|m").unwrap().to_bits(), p.to_bits());
    }

    #[test]
    fn corrupt_entries_name_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        std::fs::write(&path, r#"{"v|1|t|m": 0.5, "v|2|t|m": 1.5}"#).unwrap();
        match ProbabilityCache::open(&path) {
            Err(Error::CacheIntegrity { key, .. }) => assert_eq!(key, "v|2|t|m"),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, r#"{"v|x|t|m": 0.5}"#).unwrap();
        assert!(matches!(
            ProbabilityCache::open(&path),
            Err(Error::CacheIntegrity { .. })
        ));
        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(
            ProbabilityCache::open(&path),
            Err(Error::CacheIntegrity { .. })
        ));
    }
}
