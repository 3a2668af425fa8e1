//! On-disk dataset container: a directory holding `manifest.toml` plus one
//! `seq_NNNNN.bin` per sequence with 8-bit class indices, row-major, frames
//! back to back.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::classes::{normalize, ClassTable};
use super::frame::{RainFrame, Sample, Sequence};
use super::window::WindowSpec;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Forecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub file: String,
    pub frames: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Start indices of the windows that passed the rain filter.
    #[serde(default)]
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub height: usize,
    pub width: usize,
    pub resolution_km: f64,
    pub timestep_min: f64,
    pub rain_threshold: f64,
    pub train_window: WindowSpec,
    pub test_window: WindowSpec,
    pub class_table: ClassTable,
    #[serde(default)]
    pub sequences: Vec<SequenceEntry>,
}

impl Manifest {
    pub fn window(&self, split: Split) -> &WindowSpec {
        match split {
            Split::Train | Split::Forecast => &self.train_window,
            Split::Test => &self.test_window,
        }
    }
}

/// Create `dir` for writing. An existing non-empty directory is refused
/// unless `force`, in which case its contents are removed.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty {
            if !force {
                return Err(Error::Config(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn sequence_file_name(index: usize) -> String {
    format!("seq_{index:05}.bin")
}

/// Write class-encoded frames as one binary sequence file.
pub fn write_sequence_file(path: &Path, frames: &[RainFrame]) -> Result<()> {
    let mut bytes = Vec::new();
    for f in frames {
        bytes.extend_from_slice(f.classes()?);
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::Data(format!("cannot serialize manifest: {e}")))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// A dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Config(format!("no dataset manifest at {}", path.display()))
            }
            _ => Error::io(&path, e),
        })?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Data(format!("bad manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "dataset format version {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        manifest.class_table.validate()?;
        Ok(Self { root, manifest })
    }

    /// Class-encoded frames of sequence `index`.
    pub fn load_sequence(&self, index: usize) -> Result<Sequence> {
        let m = &self.manifest;
        let entry = m
            .sequences
            .get(index)
            .ok_or_else(|| Error::Domain(format!("sequence {index} out of range")))?;
        let path = self.root.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let plane = m.height * m.width;
        if bytes.len() != entry.frames * plane {
            return Err(Error::Data(format!(
                "{} holds {} bytes, manifest implies {}",
                path.display(),
                bytes.len(),
                entry.frames * plane
            )));
        }
        let frames = bytes
            .chunks(plane.max(1))
            .take(entry.frames)
            .enumerate()
            .map(|(t, chunk)| {
                Ok(RainFrame::from_classes(m.height, m.width, chunk.to_vec())?
                    .with_timestamp(t as f64 * m.timestep_min)
                    .with_resolution(m.resolution_km))
            })
            .collect::<Result<Vec<_>>>()?;
        Sequence::new(frames, m.timestep_min)
    }

    /// Every filtered sample of a split, in manifest order.
    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        let spec = *self.manifest.window(split);
        let mut out = Vec::new();
        for (i, entry) in self.manifest.sequences.iter().enumerate() {
            if entry.split != split || entry.samples.is_empty() {
                continue;
            }
            let seq = self.load_sequence(i)?;
            for &s in &entry.samples {
                if s + spec.len() > seq.len() {
                    return Err(Error::Data(format!(
                        "sample start {s} overruns sequence {} of {} frames",
                        entry.file,
                        seq.len()
                    )));
                }
                out.push(spec.sample_at(&seq.frames, s)?);
            }
        }
        Ok(out)
    }
    /// [`Dataset::samples`] with every frame converted to normalized encoding.
    pub fn normalized_samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.samples(split)?
            .iter()
            .map(|s| {
                let norm = |fs: &[RainFrame]| fs.iter().map(normalize).collect::<Result<Vec<_>>>();
                Sample::new(norm(&s.inputs)?, norm(&s.targets)?)
            })
            .collect()
    }
}
