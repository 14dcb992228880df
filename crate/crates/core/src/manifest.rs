//! Dataset manifest: the list of frames, their files and their split.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameLabel, PointCloud};
use crate::io;
use crate::scalar::Real;

/// File name used when a manifest is written into a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 4.0 / 6.0,
            val: 1.0 / 6.0,
            test: 1.0 / 6.0,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "split ratios must lie in [0,1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Frame counts per split for `n` frames; the test split takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let val = (((n as f64) * self.val).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    pub cloud: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<PathBuf>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub split_ratios: SplitRatios,
    pub frames: Vec<FrameEntry>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            split_ratios: SplitRatios::default(),
            frames: Vec::new(),
            root: root.into(),
        }
    }

    /// Reads and validates a manifest: unique ids and existing files.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        for f in &m.frames {
            let cloud = m.resolve(&f.cloud);
            if !cloud.is_file() {
                return Err(Error::Validation(format!(
                    "frame '{}': cloud file {} does not exist",
                    f.frame_id,
                    cloud.display()
                )));
            }
            if let Some(label) = &f.label {
                let label = m.resolve(label);
                if !label.is_file() {
                    return Err(Error::Validation(format!(
                        "frame '{}': label file {} does not exist",
                        f.frame_id,
                        label.display()
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.split_ratios.validate()?;
        let mut seen = HashSet::new();
        for f in &self.frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::Validation(format!("duplicate frame_id '{}'", f.frame_id)));
            }
        }
        Ok(())
    }

    /// Writes the manifest as pretty JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        io::write_file(path, text.as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Reassigns splits contiguously in frame order: train, then val, then test.
    pub fn assign_splits(&mut self) {
        let (train, val, _) = self.split_ratios.counts(self.frames.len());
        for (i, f) in self.frames.iter_mut().enumerate() {
            f.split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    pub fn frames_in(&self, split: Split) -> impl Iterator<Item = &FrameEntry> {
        self.frames.iter().filter(move |f| f.split == split)
    }

    pub fn find(&self, frame_id: &str) -> Option<&FrameEntry> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn load_cloud<T: Real>(&self, entry: &FrameEntry) -> Result<PointCloud<T>> {
        let mut cloud: PointCloud<T> = io::load_point_cloud(self.resolve(&entry.cloud))?;
        cloud.frame_id = entry.frame_id.clone();
        cloud.timestamp = entry.timestamp;
        Ok(cloud)
    }

    /// Labels of a frame; frames without a label file yield an empty label.
    pub fn load_label<T: Real>(&self, entry: &FrameEntry) -> Result<FrameLabel<T>> {
        match &entry.label {
            Some(p) => {
                let mut label: FrameLabel<T> = io::load_labels(self.resolve(p))?;
                label.frame_id = entry.frame_id.clone();
                Ok(label)
            }
            None => Ok(FrameLabel::new(entry.frame_id.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> FrameEntry {
        FrameEntry {
            frame_id: id.to_string(),
            timestamp: None,
            cloud: PathBuf::from(format!("clouds/{id}.bin")),
            label: None,
            split: Split::Train,
        }
    }

    #[test]
    fn default_split_is_four_one_one() {
        assert_eq!(SplitRatios::default().counts(6000), (4000, 1000, 1000));
        assert_eq!(SplitRatios::default().counts(6), (4, 1, 1));
        assert_eq!(SplitRatios::default().counts(0), (0, 0, 0));
        let mut m = DatasetManifest::new("d", "/tmp");
        m.frames = (0..6).map(|i| entry(&format!("{i:06}"))).collect();
        m.assign_splits();
        let splits: Vec<Split> = m.frames.iter().map(|f| f.split).collect();
        assert_eq!(&splits[4..], &[Split::Val, Split::Test]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = DatasetManifest::new("d", "/tmp");
        m.frames = vec![entry("a"), entry("a")];
        assert!(m.validate().is_err());
    }

    #[test]
    fn load_checks_files_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new("d", dir.path());
        m.frames = vec![entry("a")];
        let path = dir.path().join(MANIFEST_FILE);
        m.save(&path).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
        io::save_point_cloud(&PointCloud::<f32>::default(), dir.path().join("clouds/a.bin")).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.frames, m.frames);
        fs::write(&path, r#"{"name":"d","frames":[],"bogus":1}"#).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
