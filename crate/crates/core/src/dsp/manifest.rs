use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_wav, Waveform};
use crate::error::{invalid, Error, Result};
use crate::io::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// One line of `manifest.jsonl`. `path` is relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub duration_s: f64,
    pub recipe: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Rejects duplicate ids.
    pub fn new(root: PathBuf, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return invalid(format!("manifest: duplicate clip id {:?}", e.id));
            }
        }
        Ok(Self { root, entries })
    }

    /// Parses a JSONL manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
            entries.push(e);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::new(root, entries)?;
        for e in &m.entries {
            let p = m.resolve(e);
            if !p.is_file() {
                return invalid(format!("manifest: clip {} missing at {}", e.id, p.display()));
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Number of clips `n`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn resolve(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.path)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Waveform>> {
        self.split(split).map(|e| read_wav(self.resolve(e))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, split: Split) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            path: format!("clips/{id}.wav").into(),
            duration_s: 1.0,
            recipe: "chirp".into(),
            split,
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let r = DatasetManifest::new(PathBuf::new(), vec![entry("a", Split::Train), entry("a", Split::Eval)]);
        assert!(r.is_err());
    }

    #[test]
    fn missing_files_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(dir.path().into(), vec![entry("a", Split::Train)]).unwrap();
        let p = dir.path().join("manifest.jsonl");
        m.write(&p).unwrap();
        let err = DatasetManifest::load(&p).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
    }
}
