//! Clip quality measures: MSE, SSIM, FSIM and PCS.
//!
//! Frames arrive in `[-1, 1]`. MSE, SSIM and FSIM first map them to
//! `[0, 1]`; color frames are reduced to gray by the channel mean for SSIM
//! and FSIM. PCS works on the 8-bit scale.

mod fsim;
mod ssim;

use std::fmt::Write as _;

pub use fsim::{fsim, phase_congruency};
pub use ssim::{gaussian_window, ssim};

use crate::error::{Error, Result};
use crate::synthetic::VideoClip;

/// Thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 7] = [1.0, 3.0, 5.0, 25.0, 30.0, 40.0, 50.0];

fn check_pair(x: &VideoClip, g: &VideoClip) -> Result<()> {
    let sx = (x.frames(), x.channels(), x.height(), x.width());
    let sg = (g.frames(), g.channels(), g.height(), g.width());
    if sx != sg {
        return Err(Error::ShapeMismatch(format!("clip shapes {sx:?} and {sg:?} differ")));
    }
    Ok(())
}

fn unit(v: f64) -> f64 {
    (v + 1.0) * 0.5
}

/// Frame `t` as a gray `[0, 1]` image.
pub fn gray_frame(clip: &VideoClip, t: usize) -> Vec<f64> {
    let plane = clip.height() * clip.width();
    let c = clip.channels();
    let f = clip.frame(t);
    (0..plane)
        .map(|i| (0..c).map(|ch| unit(f[ch * plane + i])).sum::<f64>() / c as f64)
        .collect()
}

/// Mean squared difference over every pixel of every frame, on `[0, 1]`.
pub fn mse_frames(x: &VideoClip, g: &VideoClip) -> Result<f64> {
    check_pair(x, g)?;
    let n = x.data().len() as f64;
    Ok(x.data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| {
            let d = unit(*a) - unit(*b);
            d * d
        })
        .sum::<f64>()
        / n)
}

fn per_frame(x: &VideoClip, g: &VideoClip, f: impl Fn(&[f64], &[f64], usize, usize) -> Result<f64>) -> Result<f64> {
    check_pair(x, g)?;
    let mut total = 0.0;
    for t in 0..x.frames() {
        total += f(&gray_frame(x, t), &gray_frame(g, t), x.height(), x.width())?;
    }
    Ok(total / x.frames() as f64)
}

/// Mean per-frame SSIM.
pub fn ssim_clip(x: &VideoClip, g: &VideoClip) -> Result<f64> {
    per_frame(x, g, ssim)
}

/// Mean per-frame FSIM.
pub fn fsim_clip(x: &VideoClip, g: &VideoClip) -> Result<f64> {
    per_frame(x, g, fsim)
}

/// Euclidean distance between frame `t` of both clips, pixels on the
/// `[0, 255]` scale.
pub fn frame_distance(s: &VideoClip, g: &VideoClip, t: usize) -> f64 {
    s.frame(t)
        .iter()
        .zip(g.frame(t))
        .map(|(a, b)| {
            let d = (unit(*a) - unit(*b)) * 255.0;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Percentage of frames whose distance is at most each threshold, as
/// `(threshold, percent)` pairs in the given order.
pub fn pcs(s: &VideoClip, g: &VideoClip, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_pair(s, g)?;
    let d: Vec<f64> = (0..s.frames()).map(|t| frame_distance(s, g, t)).collect();
    Ok(thresholds
        .iter()
        .map(|&xi| {
            let hits = d.iter().filter(|&&v| v <= xi).count();
            (xi, 100.0 * hits as f64 / d.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub ssim: f64,
    pub fsim: f64,
    pub pcs: Vec<(f64, f64)>,
}

impl MetricReport {
    pub fn compute(pred: &VideoClip, truth: &VideoClip, thresholds: &[f64]) -> Result<Self> {
        Ok(Self {
            mse: mse_frames(pred, truth)?,
            ssim: ssim_clip(pred, truth)?,
            fsim: fsim_clip(pred, truth)?,
            pcs: pcs(pred, truth, thresholds)?,
        })
    }

    /// Frame-weighted mean of several reports over the same thresholds.
    pub fn mean(reports: &[(MetricReport, usize)]) -> Option<Self> {
        let total: usize = reports.iter().map(|r| r.1).sum();
        let first = &reports.first()?.0;
        let w = |n: usize| n as f64 / total as f64;
        let mut out = Self {
            mse: 0.0,
            ssim: 0.0,
            fsim: 0.0,
            pcs: first.pcs.iter().map(|&(xi, _)| (xi, 0.0)).collect(),
        };
        for (r, n) in reports {
            out.mse += w(*n) * r.mse;
            out.ssim += w(*n) * r.ssim;
            out.fsim += w(*n) * r.fsim;
            for (o, p) in out.pcs.iter_mut().zip(&r.pcs) {
                o.1 += w(*n) * p.1;
            }
        }
        Some(out)
    }

    /// A JSON object with `mse`, `ssim`, `fsim` and a `pcs` map keyed by
    /// threshold.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"mse\": {:.6},", self.mse);
        let _ = writeln!(s, "  \"ssim\": {:.6},", self.ssim);
        let _ = writeln!(s, "  \"fsim\": {:.6},", self.fsim);
        s.push_str("  \"pcs\": {");
        for (i, (xi, p)) in self.pcs.iter().enumerate() {
            let sep = if i == 0 { "" } else { ", " };
            let _ = write!(s, "{sep}\"{xi}\": {p:.2}");
        }
        s.push_str("}\n}\n");
        s
    }
}
