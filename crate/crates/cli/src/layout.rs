//! On-disk layout of one run: `<out>/<sample>__<model>/`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MEAN_STEM: &str = "equivalence_mean";

#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
}

/// Keeps ids usable as file names.
pub fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl RunLayout {
    pub fn new(out: &Path, sample_id: &str, model_id: &str) -> Self {
        Self {
            root: out.join(format!("{}__{}", file_safe(sample_id), file_safe(model_id))),
        }
    }

    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("run.json")
    }

    pub fn table(&self, stem: &str) -> PathBuf {
        self.root.join("tables").join(format!("{stem}.json"))
    }

    pub fn and_effects(&self, stem: &str) -> PathBuf {
        self.root
            .join("interactions")
            .join(format!("{stem}.and.json"))
    }

    pub fn or_effects(&self, stem: &str) -> PathBuf {
        self.root
            .join("interactions")
            .join(format!("{stem}.or.json"))
    }

    pub fn split(&self, stem: &str) -> PathBuf {
        self.root
            .join("interactions")
            .join(format!("{stem}.split.json"))
    }

    pub fn curve(&self, name: &str) -> PathBuf {
        self.root.join("curves").join(name)
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn verify_json(&self) -> PathBuf {
        self.root.join("verify.json")
    }
}

/// Pretty JSON with shortest round-trip floats, so identical values give
/// identical bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_canonical_json(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text).map_err(|source| Error::Artifact {
        path: path.to_path_buf(),
        source,
    })
}
