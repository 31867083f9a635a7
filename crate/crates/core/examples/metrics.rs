//! Scores a clip against shifted copies of itself.

use csi2video::metrics::MetricReport;
use csi2video::synthetic::{pose_trajectory, ClipKind, VideoClip};

fn main() -> csi2video::Result<()> {
    let poses = pose_trajectory(4, 8);
    let truth = VideoClip::render(ClipKind::Silhouette, &poses, 48, 64)?;
    for shift in [0.0, 0.01, 0.03, 0.1] {
        let moved: Vec<_> = poses.iter().map(|p| p.translated(shift, 0.0)).collect();
        let pred = VideoClip::render(ClipKind::Silhouette, &moved, 48, 64)?;
        let r = MetricReport::compute(&pred, &truth, &[1.0, 25.0, 50.0])?;
        println!("shift {shift:.2}: {}", r.to_json().replace('\n', " "));
    }
    Ok(())
}
