//! Tab-separated corpus manifests: `path  speaker  domain  split` per line,
//! with paths relative to the manifest's directory. Normalization
//! statistics live beside the manifest in `stats.wns`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_utterance, Domain, NormStats, Split, Utterance};
use crate::codec::{read_file, write_file};
use crate::error::{Error, Result};

pub const STATS_FILE: &str = "stats.wns";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub speaker: String,
    pub domain: Domain,
    pub split: Split,
}

impl ManifestEntry {
    /// Utterance id: the file stem.
    pub fn id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        CorpusManifest {
            root: root.into(),
            entries,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn parse(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Config(format!(
                    "manifest line {}: expected 4 tab-separated fields, got {}",
                    i + 1,
                    cols.len()
                )));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(cols[0]),
                speaker: cols[1].to_string(),
                domain: Domain::parse(cols[2])?,
                split: Split::parse(cols[3])?,
            });
        }
        Ok(CorpusManifest::new(root, entries))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                e.path.display(),
                e.speaker,
                e.domain.as_str(),
                e.split.as_str()
            );
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(root, &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text().as_bytes())
    }

    pub fn select(&self, domain: Domain, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| e.domain == domain && e.split == split)
    }

    pub fn resolve(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.path)
    }

    /// Reads an entry's file and applies the manifest's metadata.
    pub fn load_utterance(&self, e: &ManifestEntry) -> Result<Utterance> {
        let mut u = read_utterance(&self.resolve(e))?;
        u.id = e.id();
        u.speaker = e.speaker.clone();
        u.domain = e.domain;
        u.validate()?;
        Ok(u)
    }

    pub fn load_split(&self, domain: Domain, split: Split) -> Result<Vec<Utterance>> {
        self.select(domain, split)
            .map(|e| self.load_utterance(e))
            .collect()
    }

    /// The entry of `domain` sharing `id` within `split`.
    pub fn counterpart(&self, id: &str, domain: Domain, split: Split) -> Option<&ManifestEntry> {
        self.select(domain, split).find(|e| e.id() == id)
    }

    pub fn speakers(&self, split: Split) -> Vec<String> {
        let mut s: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.speaker.clone())
            .collect();
        s.sort();
        s.dedup();
        s
    }

    /// Statistics over every training utterance.
    pub fn compute_stats(&self) -> Result<NormStats> {
        let train: Vec<Utterance> = self
            .entries
            .iter()
            .filter(|e| e.split == Split::Train)
            .map(|e| self.load_utterance(e))
            .collect::<Result<_>>()?;
        NormStats::compute(train.iter().map(|u| (u, Split::Train)))
    }

    pub fn stats_path(&self) -> PathBuf {
        self.root.join(STATS_FILE)
    }

    /// Stored statistics if present, otherwise computed from the training
    /// split.
    pub fn stats(&self) -> Result<NormStats> {
        let p = self.stats_path();
        if p.exists() {
            NormStats::load(&p)
        } else {
            self.compute_stats()
        }
    }
}
