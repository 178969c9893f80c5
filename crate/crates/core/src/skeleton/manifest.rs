use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::skeleton::motion::Action;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown split `{s}`")))
    }
}

/// One manifest row. `path` is relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub action: Action,
    pub label: usize,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: [&str; 5] = ["path", "subject_id", "action", "label", "split"];

impl DatasetManifest {
    pub fn subjects(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.subject_id.as_str()).collect()
    }

    pub fn split(&self, which: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Some(which)).collect()
    }

    pub fn subjects_in(&self, which: Split) -> BTreeSet<&str> {
        self.split(which).iter().map(|e| e.subject_id.as_str()).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.entries.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    /// Checks that every subject sits in exactly one split.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Option<Split>> = BTreeMap::new();
        for e in &self.entries {
            if let Some(prev) = seen.insert(&e.subject_id, e.split) {
                if prev != e.split {
                    return Err(Error::arg(format!(
                        "subject `{}` appears in more than one split",
                        e.subject_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            let label = e.label.to_string();
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                e.subject_id.as_str(),
                e.action.as_str(),
                label.as_str(),
                e.split.map_or("", Split::as_str),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let schema = |detail: String| Error::Schema {
            path: path.to_path_buf(),
            detail,
        };
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != MANIFEST_HEADER {
            return Err(schema(format!("header must be {}", MANIFEST_HEADER.join(","))));
        }
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let action = field(2)
                .parse()
                .map_err(|e: Error| schema(format!("row {row}, field action: {e}")))?;
            let label = field(3)
                .parse()
                .map_err(|e| schema(format!("row {row}, field label: {e}")))?;
            let split = match field(4) {
                "" => None,
                s => Some(s.parse().map_err(|e: Error| schema(format!("row {row}, field split: {e}")))?),
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(field(0)),
                subject_id: field(1).to_string(),
                action,
                label,
                split,
            });
        }
        let m = DatasetManifest { entries };
        m.validate().map_err(|e| schema(e.to_string()))?;
        Ok(m)
    }
}

/// Shuffles the sorted subject list with `seed` and partitions it by `ratios`.
///
/// Train and validation sizes are rounded; test takes the remainder. Each
/// part receives at least one subject.
pub fn split_by_subject(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::arg(format!("split ratios must be positive, got {ratios:?}")));
    }
    let mut subjects: Vec<String> = manifest.subjects().into_iter().map(str::to_string).collect();
    let n = subjects.len();
    if n < 3 {
        return Err(Error::arg(format!("need at least 3 subjects to split, got {n}")));
    }
    let total: f64 = ratios.iter().sum();
    let n_train = ((ratios[0] / total * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((ratios[1] / total * n as f64).round() as usize).clamp(1, n - 1 - n_train);
    subjects.shuffle(&mut rng::stream(seed, &[rng::tag("split")]));
    let assign: BTreeMap<String, Split> = subjects
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (s, split)
        })
        .collect();
    Ok(DatasetManifest {
        entries: manifest
            .entries
            .iter()
            .map(|e| ManifestEntry {
                split: Some(assign[&e.subject_id]),
                ..e.clone()
            })
            .collect(),
    })
}
