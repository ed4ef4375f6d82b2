//! Dataset manifests: CSV with header `path,label,split`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
    /// Cross-validation fold `0..=9`.
    Fold(u8),
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => s
                .strip_prefix("fold")
                .and_then(|d| d.parse::<u8>().ok().filter(|&k| k <= 9 && d.len() == 1))
                .map(Split::Fold)
                .ok_or_else(|| Error::Data(format!("unknown split `{s}` (expected train, val, test or fold0..fold9)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Val => f.write_str("val"),
            Split::Test => f.write_str("test"),
            Split::Fold(k) => write!(f, "fold{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Path as written in the manifest.
    pub path: String,
    /// Path resolved against the manifest's directory.
    pub resolved: PathBuf,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses manifest text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Data(format!("manifest header: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
            return Err(Error::Data(format!(
                "manifest header must be `path,label,split`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            let path = record[0].to_string();
            if path.is_empty() {
                return Err(Error::Data(format!("line {line}: empty path")));
            }
            let label = record[1]
                .parse::<usize>()
                .map_err(|_| Error::Data(format!("line {line}: label `{}` is not a non-negative integer", &record[1])))?;
            let split = record[2].parse::<Split>().map_err(|e| match e {
                Error::Data(m) => Error::Data(format!("line {line}: {m}")),
                other => other,
            })?;
            let resolved = base.join(&path);
            rows.push(ManifestRow { path, resolved, label, split });
        }
        Ok(Manifest { rows })
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.rows_in(split).count()
    }

    /// Distinct fold indices present, ascending.
    pub fn folds(&self) -> Vec<u8> {
        let set: BTreeSet<u8> =
            self.rows.iter().filter_map(|r| if let Split::Fold(k) = r.split { Some(k) } else { None }).collect();
        set.into_iter().collect()
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.rows.iter().map(|r| r.label + 1).max().unwrap_or(0)
    }
}
