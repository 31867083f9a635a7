//! Generates a paired video/CSI dataset and writes it to disk.
//!
//!     cargo run --release --example dataset -- /tmp/csi-data

use csi2video::synthetic::{generate_dataset, load_dataset, save_dataset, ClipKind, DatasetSpec, SceneConfig};

fn main() -> csi2video::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic-data".into());
    let spec = DatasetSpec { samples: 3, kind: ClipKind::Skeleton, ..DatasetSpec::default() };
    let samples = generate_dataset(&spec, &SceneConfig::default())?;
    save_dataset(&out, &samples)?;
    for (i, s) in load_dataset(&out)?.iter().enumerate() {
        println!(
            "sample {i}: {} frames {}x{}x{}, {} packets ({} per frame)",
            s.clip.frames(),
            s.clip.channels(),
            s.clip.height(),
            s.clip.width(),
            s.csi.n_pkt(),
            s.packets_per_frame()
        );
    }
    println!("written to {out}");
    Ok(())
}
