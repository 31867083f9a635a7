//! Overfits teacher and student on four synthetic pairs, then synthesizes
//! each clip from its CSI alone.
//!
//!     cargo run --release --example overfit -- 500

use std::time::Instant;

use csi2video::metrics::MetricReport;
use csi2video::network::{Model, ModelConfig, SignalNorm};
use csi2video::synthetic::{generate_dataset, DatasetSpec, SceneConfig};
use csi2video::training::{prepare_signals, LossWeights, OptimConfig, Trainer};

fn main() -> csi2video::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let samples = generate_dataset(&DatasetSpec::default(), &SceneConfig::default())?;
    let signals = prepare_signals(&samples, &Default::default())?;
    let optim = OptimConfig { lr: 2e-2, ..Default::default() };
    let mut model = Model::init(ModelConfig { hidden: 100, ..Default::default() }, optim.init_std, optim.seed)?;
    model.norm = SignalNorm::fit(&signals)?;
    let weights = LossWeights { w_adv: 0.0, ..Default::default() };
    let mut trainer = Trainer::new(model, optim, weights)?;

    let clips: Vec<_> = samples.iter().map(|s| &s.clip).collect();
    let sigs: Vec<_> = signals.iter().collect();
    let start = Instant::now();
    for step in 0..steps {
        let r = trainer.train_step(&clips, &sigs)?;
        if step % 50 == 0 || step + 1 == steps {
            println!(
                "step {step:4} {:6.1}s mse_y {:.4} mse_v {:.4} mse_s {:.4}",
                start.elapsed().as_secs_f64(),
                r.mse_y,
                r.mse_v,
                r.mse_s
            );
        }
    }
    for (i, (s, a)) in samples.iter().zip(&signals).enumerate() {
        let pred = trainer.model.synthesize(a)?;
        let r = MetricReport::compute(&pred, &s.clip, &[25.0, 50.0])?;
        println!("sample {i}: {}", r.to_json().replace('\n', " "));
    }
    Ok(())
}
