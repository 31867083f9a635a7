//! Removes impulsive spikes from one amplitude series and from a whole
//! synthetic capture.

use csi2video::sanitizer::{hampel_filter, sanitize_sequence, HampelConfig};
use csi2video::synthetic::{pose_trajectory, synthesize_csi, SceneConfig};

fn main() -> csi2video::Result<()> {
    let series = [10.0, 10.5, 9.8, 80.0, 10.1, 10.2, -40.0, 9.9, 10.0];
    let clean = hampel_filter(&series, &HampelConfig::new(5, 3.0)?)?;
    println!("raw   {series:?}");
    println!("clean {clean:?}");

    let scene = SceneConfig::default();
    let seq = synthesize_csi(&pose_trajectory(1, 16), &scene, 16)?;
    let m = sanitize_sequence(&seq, &HampelConfig::default())?;
    let (p, k) = m.shape();
    println!("condensed capture: {p} packets x {k} subcarriers, first row {:.2?}", &m.row(0)[..4]);
    Ok(())
}
