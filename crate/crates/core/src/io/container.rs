//! Sequence container: a directory holding `manifest.json`, one VOTB blob
//! per frame and a KITTI pose file. A dataset is a directory of sequence
//! directories listed in `dataset.json`.

use std::path::Path;

use memvo_tensor::{votb, Tensor};
use serde::{Deserialize, Serialize};

use super::kitti::{read_kitti_file, write_kitti_file};
use crate::error::{invalid, io_err, json_err, Result};
use crate::geometry::{relative_poses, Pose6DoF, PoseSE3};

pub const SEQUENCE_MANIFEST: &str = "manifest.json";
pub const DATASET_MANIFEST: &str = "dataset.json";
const SEQUENCE_FORMAT: &str = "memvo-sequence";
const DATASET_FORMAT: &str = "memvo-dataset";
const FORMAT_VERSION: u32 = 1;

/// Frames `[3, H, W]` with ground-truth camera poses relative to frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Tensor>,
    pub poses: Vec<PoseSE3>,
}

impl Sequence {
    pub fn new(frames: Vec<Tensor>, poses: Vec<PoseSE3>) -> Result<Self> {
        if frames.len() != poses.len() {
            return Err(invalid(format!(
                "{} frames but {} poses",
                frames.len(),
                poses.len()
            )));
        }
        let first = frames
            .first()
            .ok_or_else(|| invalid("a sequence needs at least one frame"))?;
        if first.ndim() != 3 || first.shape()[0] != 3 {
            return Err(invalid(format!(
                "frames must be [3, H, W], got {:?}",
                first.shape()
            )));
        }
        if let Some(i) = frames.iter().position(|f| f.shape() != first.shape()) {
            return Err(invalid(format!(
                "frame {i} has shape {:?}, expected {:?}",
                frames[i].shape(),
                first.shape()
            )));
        }
        Ok(Self { frames, poses })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }

    pub fn relative(&self) -> Vec<Pose6DoF> {
        relative_poses(&self.poses)
    }

    /// Frames `start..start + len` with ground truth expressed relative to
    /// the window's first frame: `len − 1` relative and `len − 1` absolute
    /// poses.
    pub fn window(&self, start: usize, len: usize) -> Result<(Vec<Tensor>, Vec<Pose6DoF>, Vec<Pose6DoF>)> {
        if len < 2 || start + len > self.len() {
            return Err(invalid(format!(
                "window {start}..{} outside a {}-frame sequence",
                start + len,
                self.len()
            )));
        }
        let poses = &self.poses[start..start + len];
        let anchor = poses[0];
        let absolute = poses[1..].iter().map(|p| anchor.between(p).to_pose6()).collect();
        Ok((
            self.frames[start..start + len].to_vec(),
            relative_poses(poses),
            absolute,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub format: String,
    pub version: u32,
    pub frame_count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub poses: String,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetManifest {
    format: String,
    version: u32,
    sequences: Vec<String>,
}

/// Manifest entries name files inside the container, never paths.
pub(crate) fn plain_name(name: &str) -> Result<&str> {
    let p = Path::new(name);
    if name.is_empty() || p.components().count() != 1 || p.file_name().is_none() {
        return Err(invalid(format!("`{name}` is not a plain file name")));
    }
    Ok(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

pub fn write_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let frames: Vec<String> = (0..seq.len()).map(|i| format!("frame_{i:06}.votb")).collect();
    for (name, frame) in frames.iter().zip(&seq.frames) {
        let path = dir.join(name);
        votb::write_file(&path, frame).map_err(crate::Error::from)?;
    }
    let poses = "poses.txt".to_string();
    write_kitti_file(&dir.join(&poses), &seq.poses)?;
    let manifest = SequenceManifest {
        format: SEQUENCE_FORMAT.into(),
        version: FORMAT_VERSION,
        frame_count: seq.len(),
        height: seq.height(),
        width: seq.width(),
        channels: 3,
        poses,
        frames,
    };
    write_json(&dir.join(SEQUENCE_MANIFEST), &manifest)
}

pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let manifest: SequenceManifest = read_json(&dir.join(SEQUENCE_MANIFEST))?;
    if manifest.format != SEQUENCE_FORMAT || manifest.version != FORMAT_VERSION {
        return Err(invalid(format!(
            "{}: unsupported container {} v{}",
            dir.display(),
            manifest.format,
            manifest.version
        )));
    }
    if manifest.frames.len() != manifest.frame_count {
        return Err(invalid(format!(
            "{}: manifest lists {} frames but declares {}",
            dir.display(),
            manifest.frames.len(),
            manifest.frame_count
        )));
    }
    let expected = [manifest.channels, manifest.height, manifest.width];
    let mut frames = Vec::with_capacity(manifest.frame_count);
    for name in &manifest.frames {
        let path = dir.join(plain_name(name)?);
        let frame = votb::read_file(&path).map_err(crate::Error::from)?;
        if frame.shape() != expected {
            return Err(invalid(format!(
                "{}: shape {:?} does not match manifest {expected:?}",
                path.display(),
                frame.shape()
            )));
        }
        frames.push(frame);
    }
    let poses = read_kitti_file(&dir.join(plain_name(&manifest.poses)?))?.into_poses();
    Sequence::new(frames, poses)
}

/// Write sequences into `seq_000`, `seq_001`, … under `dir`.
pub fn write_dataset(dir: &Path, sequences: &[Sequence]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let names: Vec<String> = (0..sequences.len()).map(|i| format!("seq_{i:03}")).collect();
    for (name, seq) in names.iter().zip(sequences) {
        write_sequence(&dir.join(name), seq)?;
    }
    write_json(
        &dir.join(DATASET_MANIFEST),
        &DatasetManifest {
            format: DATASET_FORMAT.into(),
            version: FORMAT_VERSION,
            sequences: names,
        },
    )
}

/// Read a dataset directory, or a single sequence directory as a one-element
/// dataset.
pub fn read_dataset(dir: &Path) -> Result<Vec<Sequence>> {
    let index = dir.join(DATASET_MANIFEST);
    if !index.exists() {
        if dir.join(SEQUENCE_MANIFEST).exists() {
            return Ok(vec![read_sequence(dir)?]);
        }
        return Err(invalid(format!(
            "{}: neither {DATASET_MANIFEST} nor {SEQUENCE_MANIFEST} found",
            dir.display()
        )));
    }
    let manifest: DatasetManifest = read_json(&index)?;
    if manifest.format != DATASET_FORMAT || manifest.version != FORMAT_VERSION {
        return Err(invalid(format!(
            "{}: unsupported dataset {} v{}",
            dir.display(),
            manifest.format,
            manifest.version
        )));
    }
    manifest
        .sequences
        .iter()
        .map(|name| read_sequence(&dir.join(plain_name(name)?)))
        .collect()
}
