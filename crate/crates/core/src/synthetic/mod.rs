//! Paired video/CSI samples from a procedural stick figure and a toy
//! multipath channel.

mod channel;
mod pose;
mod render;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use channel::{body_path, pose_cfr, synthesize_csi, SceneConfig};
pub use pose::{joint, pose_trajectory, Pose, BONES, MAX_STEP, N_JOINTS};
pub use render::{render_silhouette, render_skeleton, BONE_COLORS};

use crate::csi::{ComplexCfr, CsiSequence};
use crate::csi_io::{load_csib, save_csib};
use crate::error::{Error, Result};
use crate::netpbm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClipKind {
    Silhouette,
    Skeleton,
}

impl ClipKind {
    pub fn channels(self) -> usize {
        match self {
            ClipKind::Silhouette => 1,
            ClipKind::Skeleton => 3,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ClipKind::Silhouette => "pgm",
            ClipKind::Skeleton => "ppm",
        }
    }

    pub fn render(self, pose: &Pose, h: usize, w: usize) -> Vec<f64> {
        match self {
            ClipKind::Silhouette => render_silhouette(pose, h, w),
            ClipKind::Skeleton => render_skeleton(pose, h, w),
        }
    }
}

impl fmt::Display for ClipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipKind::Silhouette => "silhouette",
            ClipKind::Skeleton => "skeleton",
        })
    }
}

impl FromStr for ClipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silhouette" => Ok(ClipKind::Silhouette),
            "skeleton" => Ok(ClipKind::Skeleton),
            other => Err(Error::Parse(format!("unknown clip kind {other:?}"))),
        }
    }
}

/// `T` frames of `C × H × W` pixels in `[-1, 1]`, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    kind: ClipKind,
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VideoClip {
    pub fn new(kind: ClipKind, frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch("clip dimensions must be >= 1".into()));
        }
        let expected = frames * kind.channels() * height * width;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{kind} clip {frames}x{height}x{width} needs {expected} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::ShapeMismatch("clip values must lie in [-1, 1]".into()));
        }
        Ok(Self {
            kind,
            frames,
            height,
            width,
            data,
        })
    }

    pub fn render(kind: ClipKind, poses: &[Pose], height: usize, width: usize) -> Result<Self> {
        let data = poses.iter().flat_map(|p| kind.render(p, height, width)).collect();
        Self::new(kind, poses.len(), height, width, data)
    }

    /// Builds a clip from channel-major `C × T × H × W` values, clamping
    /// into `[-1, 1]`.
    pub fn from_volume(kind: ClipKind, frames: usize, height: usize, width: usize, volume: &[f64]) -> Result<Self> {
        let c = kind.channels();
        let plane = height * width;
        if volume.len() != c * frames * plane {
            return Err(Error::ShapeMismatch(format!(
                "volume of {} values does not match {c}x{frames}x{height}x{width}",
                volume.len()
            )));
        }
        let mut data = vec![0.0; volume.len()];
        for ch in 0..c {
            for t in 0..frames {
                let src = &volume[(ch * frames + t) * plane..][..plane];
                let dst = &mut data[(t * c + ch) * plane..][..plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s.clamp(-1.0, 1.0);
                }
            }
        }
        Self::new(kind, frames, height, width, data)
    }

    /// Channel-major `C × T × H × W` copy, the layout the networks use.
    pub fn to_volume(&self) -> Vec<f64> {
        let c = self.channels();
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for t in 0..self.frames {
            for ch in 0..c {
                out[(ch * self.frames + t) * plane..][..plane]
                    .copy_from_slice(&self.data[(t * c + ch) * plane..][..plane]);
            }
        }
        out
    }

    pub fn kind(&self) -> ClipKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.channels() * self.height * self.width
    }

    /// Planar `C × H × W` pixels of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Writes `clip_%03d.pgm` or `.ppm` files into `dir`.
    pub fn save_frames(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for t in 0..self.frames {
            let path = dir.join(format!("clip_{t:03}.{}", self.kind.extension()));
            netpbm::write_frame(path, self.channels(), self.height, self.width, self.frame(t))?;
        }
        Ok(())
    }

    /// Reads every `clip_*.pgm` (or `.ppm`) in `dir`, ordered by name.
    pub fn load_frames(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.starts_with("clip_") && (name.ends_with(".pgm") || name.ends_with(".ppm"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Parse(format!("no clip frames in {}", dir.display())));
        }
        let mut data = Vec::new();
        let mut shape = None;
        for f in &files {
            let frame = netpbm::read_frame(f)?;
            let s = (frame.channels, frame.height, frame.width);
            if *shape.get_or_insert(s) != s {
                return Err(Error::ShapeMismatch(format!("{} differs in shape from earlier frames", f.display())));
            }
            data.extend(frame.data);
        }
        let (c, h, w) = shape.unwrap_or_default();
        let kind = if c == 1 { ClipKind::Silhouette } else { ClipKind::Skeleton };
        Self::new(kind, files.len(), h, w, data)
    }
}

/// One synchronized pair: packet `i` belongs to frame `⌊i·T/P⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clip: VideoClip,
    pub csi: CsiSequence,
}

impl Sample {
    pub fn packets_per_frame(&self) -> usize {
        self.csi.n_pkt() / self.clip.frames()
    }
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub samples: usize,
    pub frames: usize,
    pub packets: usize,
    pub height: usize,
    pub width: usize,
    pub kind: ClipKind,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            samples: 4,
            frames: 16,
            packets: 256,
            height: 48,
            width: 64,
            kind: ClipKind::Silhouette,
        }
    }
}

/// Independent per-sample seeds derived from the scene seed and the
/// sample index: `(trajectory seed, noise seed)`.
fn sample_seeds(seed: u64, index: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (rng.next_u64(), rng.next_u64())
}

/// Generates `spec.samples` pairs. CSI components are rounded to integers
/// so the samples survive the `.csib` container unchanged.
pub fn generate_dataset(spec: &DatasetSpec, scene: &SceneConfig) -> Result<Vec<Sample>> {
    if spec.frames == 0 || !spec.packets.is_multiple_of(spec.frames) || spec.packets == 0 {
        return Err(Error::IndivisiblePacketCount {
            packets: spec.packets,
            frames: spec.frames,
        });
    }
    scene.validate()?;
    let ppf = spec.packets / spec.frames;
    (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let (traj_seed, noise_seed) = sample_seeds(scene.seed, i);
            let poses = pose_trajectory(traj_seed, spec.frames);
            let clip = VideoClip::render(spec.kind, &poses, spec.height, spec.width)?;
            let cfg = SceneConfig {
                seed: noise_seed,
                ..scene.clone()
            };
            let raw = synthesize_csi(&poses, &cfg, ppf)?;
            let csi = CsiSequence::from_fn(raw.dims(), raw.n_pkt(), |p, rx, tx, k| {
                let v = raw.get(p, rx, tx, k);
                ComplexCfr {
                    re: v.re.round(),
                    im: v.im.round(),
                }
            })?;
            Ok(Sample { clip, csi })
        })
        .collect()
}

/// Writes `sample_%04d/clip_%03d.{pgm,ppm}` and `sample_%04d/csi.csib`.
pub fn save_dataset(dir: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let dir = dir.as_ref();
    for (i, s) in samples.iter().enumerate() {
        let sub = dir.join(format!("sample_{i:04}"));
        s.clip.save_frames(&sub)?;
        save_csib(sub.join("csi.csib"), &s.csi)?;
    }
    Ok(())
}

/// Reads every `sample_*` directory under `dir`, ordered by name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let mut subs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("sample_"))
        })
        .collect();
    subs.sort();
    if subs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    subs.iter()
        .map(|sub| {
            let clip = VideoClip::load_frames(sub)?;
            let csi = load_csib(sub.join("csi.csib"))?;
            if csi.n_pkt() % clip.frames() != 0 {
                return Err(Error::IndivisiblePacketCount {
                    packets: csi.n_pkt(),
                    frames: clip.frames(),
                });
            }
            Ok(Sample { clip, csi })
        })
        .collect()
}
