//! Dataset manifests.
//!
//! One frame per line, tab-separated, fixed field order:
//!
//! ```text
//! frame_id  path  east  north  yaw  split
//! ```
//!
//! `path` is relative to the manifest's directory (absolute paths are kept
//! as is), `yaw` is radians or `-` when unknown, and `split` is one of
//! `database`, `query`, `train`. Lines starting with `#` are comments.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cloud::FrameMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Database,
    Query,
    Train,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Database => "database",
            Split::Query => "query",
            Split::Train => "train",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "database" => Ok(Split::Database),
            "query" => Ok(Split::Query),
            "train" => Ok(Split::Train),
            other => Err(Error::Dataset(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub meta: FrameMeta,
    /// Scan path as written in the manifest.
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative scan paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.meta.frame_id.is_empty() || e.meta.frame_id.contains(['\t', '\n', '/', '\\']) {
                return Err(Error::Dataset(format!("invalid frame_id {:?}", e.meta.frame_id)));
            }
            if !seen.insert(e.meta.frame_id.clone()) {
                return Err(Error::Dataset(format!("duplicate frame_id {}", e.meta.frame_id)));
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Dataset(format!("manifest line {}: {what}", n + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, path, east, north, yaw, split] = fields[..] else {
                return Err(bad(&format!("expected 6 tab-separated fields, got {}", fields.len())));
            };
            let num = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(&format!("{name} {s:?} is not a finite number")))
            };
            let yaw = if yaw == "-" { None } else { Some(num(yaw, "yaw")?) };
            entries.push(ManifestEntry {
                meta: FrameMeta::new(id, num(east, "east")?, num(north, "north")?, yaw),
                path: PathBuf::from(path),
                split: split.parse().map_err(|_| bad(&format!("unknown split {split:?}")))?,
            });
        }
        Self::new(entries, base_dir)
    }

    /// Reads a manifest and checks that every scan path exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, base)?;
        if m.entries.is_empty() {
            return Err(Error::Dataset(format!("{} lists no frames", path.display())));
        }
        for e in &m.entries {
            let p = m.scan_path(e);
            if !p.is_file() {
                return Err(Error::Dataset(format!("frame {}: scan {} not found", e.meta.frame_id, p.display())));
            }
        }
        Ok(m)
    }

    pub fn scan_path(&self, e: &ManifestEntry) -> PathBuf {
        if e.path.is_absolute() {
            e.path.clone()
        } else {
            self.base_dir.join(&e.path)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_text(&self, config_hash: u64) -> String {
        let mut s = format!("# config_hash={config_hash:016x}\n# frame_id\tpath\teast\tnorth\tyaw\tsplit\n");
        for e in &self.entries {
            let yaw = e.meta.yaw.map(|y| format!("{y:.17}")).unwrap_or_else(|| "-".into());
            writeln!(
                s,
                "{}\t{}\t{:.17}\t{:.17}\t{}\t{}",
                e.meta.frame_id,
                e.path.display(),
                e.meta.east,
                e.meta.north,
                yaw,
                e.split
            )
            .unwrap();
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>, config_hash: u64) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text(config_hash)).map_err(|e| Error::io(path, e))
    }
}
