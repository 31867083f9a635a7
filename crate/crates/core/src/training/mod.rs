//! Loss functions, Adam, and the cross-modality training loop.
//!
//! Each batch runs three updates in order: the discriminator on
//! `L_adv_C`, the teacher encoder/decoder on `L_teacher`, and the student
//! LSTM plus lift on `L_student` with the teacher's latent and frames as
//! fixed targets and the decoder frozen.

mod adam;
mod losses;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, Adam, AdamState};
pub use losses::{
    discriminator_loss, generator_loss, student_losses, student_terms, teacher_losses, teacher_terms, total_loss,
    StudentLosses, StudentTerms, TeacherLosses, TeacherTerms,
};

use crate::error::{Error, Result};
use crate::network::{part, Bound, Model, ModelConfig, Pass, SignalNorm};
use crate::sanitizer::{sanitize_sequence, AmplitudeMatrix, HampelConfig};
use crate::synthetic::{ClipKind, Sample, VideoClip};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_adv: f64,
    pub w_y: f64,
    pub w_v: f64,
    pub w_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_adv: 0.5,
            w_y: 1.0,
            w_v: 0.5,
            w_s: 1.0,
        }
    }
}

impl LossWeights {
    /// Requires nonnegative weights with `w_adv < w_Y` and `w_V < w_S`.
    pub fn new(w_adv: f64, w_y: f64, w_v: f64, w_s: f64) -> Result<Self> {
        let w = Self { w_adv, w_y, w_v, w_s };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_adv, self.w_y, self.w_v, self.w_s];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("loss weights must be finite and >= 0".into()));
        }
        if !(self.w_adv < self.w_y) || !(self.w_v < self.w_s) {
            return Err(Error::InvalidConfig("loss weights need w_adv < w_y and w_v < w_s".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub init_std: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self::for_kind(ClipKind::Silhouette)
    }
}

impl OptimConfig {
    /// Defaults with the epoch budget of the given clip kind.
    pub fn for_kind(kind: ClipKind) -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            epochs: match kind {
                ClipKind::Silhouette => 800,
                ClipKind::Skeleton => 1600,
            },
            init_std: 0.02,
            seed: 0,
            batch_size: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be > 0, got {}", self.lr)));
        }
        for (b, name) in [(self.beta1, "beta1"), (self.beta2, "beta2")] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) || !(self.init_std >= 0.0 && self.init_std.is_finite()) || self.batch_size == 0 {
            return Err(Error::InvalidConfig("eps > 0, init_std >= 0 and batch_size >= 1 are required".into()));
        }
        Ok(())
    }
}

/// The five component losses of one update (or their epoch mean).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossRecord {
    pub l_adv_c: f64,
    pub l_adv_g: f64,
    pub mse_y: f64,
    pub mse_v: f64,
    pub mse_s: f64,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        [self.l_adv_c, self.l_adv_g, self.mse_y, self.mse_v, self.mse_s]
            .iter()
            .all(|v| v.is_finite())
    }

    fn mean(records: &[LossRecord]) -> LossRecord {
        let n = records.len().max(1) as f64;
        let mut m = LossRecord::default();
        for r in records {
            m.l_adv_c += r.l_adv_c / n;
            m.l_adv_g += r.l_adv_g / n;
            m.mse_y += r.mse_y / n;
            m.mse_v += r.mse_v / n;
            m.mse_s += r.mse_s / n;
        }
        m
    }
}

pub const LOSS_CSV_HEADER: &str = "epoch,l_adv_c,l_adv_g,mse_y,mse_v,mse_s";

pub fn loss_csv_row(epoch: usize, r: &LossRecord) -> String {
    format!(
        "{epoch},{:.8},{:.8},{:.8},{:.8},{:.8}",
        r.l_adv_c, r.l_adv_g, r.mse_y, r.mse_v, r.mse_s
    )
}

/// Teacher outputs kept for the student update.
#[derive(Debug, Clone)]
pub struct TeacherTargets {
    pub z: Tensor,
    pub y: Tensor,
}

/// Model, optimizer state and hyperparameters of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub optim: OptimConfig,
    pub weights: LossWeights,
}

impl Trainer {
    pub fn new(model: Model, optim: OptimConfig, weights: LossWeights) -> Result<Self> {
        optim.validate()?;
        weights.validate()?;
        Ok(Self {
            model,
            adam: Adam::new(),
            optim,
            weights,
        })
    }

    fn apply(&mut self, g: &Graph, bound: &Bound) -> Result<()> {
        let mut names: Vec<(&str, _)> = bound.iter().collect();
        names.sort_by(|a, b| a.0.cmp(b.0));
        for (name, var) in names {
            let Some(grad) = g.grad_data(var) else {
                continue;
            };
            let param = self
                .model
                .param_mut(name)
                .ok_or_else(|| Error::ShapeMismatch(format!("unknown parameter {name}")))?;
            self.adam.step(name, param, grad, &self.optim)?;
        }
        Ok(())
    }

    /// Sub-steps one and two: a discriminator update, then an encoder and
    /// decoder update. The teacher forward pass runs once, before either
    /// update, since the discriminator update cannot change it.
    pub fn teacher_step(&mut self, clips: &Tensor) -> Result<(TeacherTargets, TeacherLosses)> {
        let mut gt = Graph::new();
        let tb = self.model.bind(&mut gt, &[part::ENCODER, part::DECODER], true);
        let f = gt.constant(clips.clone());
        let z = self.model.encode_video(&mut gt, &tb, f, Pass::Train)?;
        let y = self.model.decode_video(&mut gt, &tb, z, Pass::Train)?;
        let targets = TeacherTargets {
            z: gt.value(z).clone(),
            y: gt.value(y).clone(),
        };

        let l_adv_c = {
            let mut gc = Graph::new();
            let cb = self.model.bind(&mut gc, &[part::DISCRIMINATOR], true);
            let real = gc.constant(clips.clone());
            let fake = gc.constant(targets.y.clone());
            let c_real = self.model.discriminate(&mut gc, &cb, real, Pass::Train)?;
            let c_fake = self.model.discriminate(&mut gc, &cb, fake, Pass::Train)?;
            let loss = discriminator_loss(&mut gc, c_real, c_fake)?;
            gc.backward(loss)?;
            self.apply(&gc, &cb)?;
            gc.value(loss).item()
        };

        let cb = self.model.bind(&mut gt, &[part::DISCRIMINATOR], false);
        let c_real = self.model.discriminate(&mut gt, &cb, f, Pass::TrainFrozenStats)?;
        let c_fake = self.model.discriminate(&mut gt, &cb, y, Pass::TrainFrozenStats)?;
        let terms = teacher_terms(&mut gt, f, y, c_real, c_fake, &self.weights)?;
        gt.backward(terms.l_teacher)?;
        self.apply(&gt, &tb)?;
        let losses = TeacherLosses {
            l_adv_c,
            l_adv_g: gt.value(terms.l_adv_g).item(),
            mse_y: gt.value(terms.mse_y).item(),
            l_teacher: gt.value(terms.l_teacher).item(),
        };
        Ok((targets, losses))
    }

    /// Sub-step three: the LSTM and lift move towards the teacher's latent
    /// and frames. The decoder runs with running statistics and constant
    /// weights.
    pub fn student_step(&mut self, rows: &[Tensor], targets: &TeacherTargets) -> Result<StudentLosses> {
        let mut g = Graph::new();
        let sb = self.model.bind(&mut g, &[part::LSTM, part::LIFT], true);
        let db = self.model.bind(&mut g, &[part::DECODER], false);
        let h = self.model.encode_signal(&mut g, &sb, rows)?;
        let v = self.model.lift_to_visual(&mut g, &sb, h)?;
        let s = self.model.decode_video(&mut g, &db, v, Pass::Eval)?;
        let z = g.constant(targets.z.clone());
        let y = g.constant(targets.y.clone());
        let terms = student_terms(&mut g, z, v, y, s, &self.weights)?;
        g.backward(terms.l_student)?;
        self.apply(&g, &sb)?;
        Ok(StudentLosses {
            mse_v: g.value(terms.mse_v).item(),
            mse_s: g.value(terms.mse_s).item(),
            l_student: g.value(terms.l_student).item(),
        })
    }

    /// One full update on a batch of paired clips and amplitude matrices.
    pub fn train_step(&mut self, clips: &[&VideoClip], signals: &[&AmplitudeMatrix]) -> Result<LossRecord> {
        if clips.len() != signals.len() || clips.is_empty() {
            return Err(Error::ShapeMismatch("a batch needs equally many clips and signals".into()));
        }
        let f = self.model.clip_batch(clips)?;
        let rows = self.model.signal_batch(signals)?;
        let (targets, t) = self.teacher_step(&f)?;
        let s = self.student_step(&rows, &targets)?;
        Ok(LossRecord {
            l_adv_c: t.l_adv_c,
            l_adv_g: t.l_adv_g,
            mse_y: t.mse_y,
            mse_v: s.mse_v,
            mse_s: s.mse_s,
        })
    }

    /// One pass over `indices` in an order drawn from the seed and epoch
    /// number. Returns the per-step records.
    pub fn run_epoch(
        &mut self,
        epoch: usize,
        clips: &[VideoClip],
        signals: &[AmplitudeMatrix],
        indices: &[usize],
    ) -> Result<Vec<LossRecord>> {
        let mut order = indices.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(self.optim.seed);
        rng.set_stream(1 + epoch as u64);
        order.shuffle(&mut rng);
        order
            .chunks(self.optim.batch_size)
            .map(|batch| {
                let c: Vec<&VideoClip> = batch.iter().map(|&i| &clips[i]).collect();
                let s: Vec<&AmplitudeMatrix> = batch.iter().map(|&i| &signals[i]).collect();
                self.train_step(&c, &s)
            })
            .collect()
    }

    pub fn to_checkpoint(&self, epochs_done: usize) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.insert("meta.epochs", Tensor::scalar(epochs_done as f64));
        self.adam.save_into(&mut ck);
        ck
    }

    /// Restores a trainer and the number of completed epochs.
    pub fn from_checkpoint(ck: &Checkpoint, optim: OptimConfig, weights: LossWeights) -> Result<(Self, usize)> {
        let model = Model::from_checkpoint(ck)?;
        let mut t = Self::new(model, optim, weights)?;
        t.adam = Adam::load_from(ck)?;
        let epochs = ck.get("meta.epochs").map(|e| e.item() as usize).unwrap_or(0);
        Ok((t, epochs))
    }
}

/// Deterministic `(train, test)` index split; the train part holds
/// `round(n · fraction)` samples, at least one.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let k = ((n as f64 * fraction).round() as usize).clamp(n.min(1), n);
    let test = idx.split_off(k);
    (idx, test)
}

/// Everything `train` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Structural settings; clip and signal dimensions are taken from the
    /// dataset.
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub weights: LossWeights,
    pub hampel: HampelConfig,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            weights: LossWeights::default(),
            hampel: HampelConfig::default(),
            train_fraction: 0.75,
        }
    }
}

pub const CHECKPOINT_FILE: &str = "model.w8ts";
pub const LOSS_FILE: &str = "losses.csv";
pub const SPLIT_FILE: &str = "split.txt";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    /// Epoch-mean losses of the epochs run by this call.
    pub history: Vec<(usize, LossRecord)>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub checkpoint: PathBuf,
}

/// Sanitized amplitude matrices for every sample.
pub fn prepare_signals(samples: &[Sample], hampel: &HampelConfig) -> Result<Vec<AmplitudeMatrix>> {
    samples.iter().map(|s| sanitize_sequence(&s.csi, hampel)).collect()
}

/// Trains for `cfg.optim.epochs` epochs, writing the checkpoint, the loss
/// log and the split into `out`. With `resume`, continues from the
/// checkpoint already in `out`: epoch numbers pick up where it stopped and
/// rows are appended to its loss log.
pub fn train(samples: &[Sample], cfg: &TrainConfig, out: &Path, resume: bool) -> Result<TrainOutcome> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0) {
        return Err(Error::InvalidConfig("train_fraction must lie in (0, 1]".into()));
    }
    let dims = first.csi.dims();
    let model_cfg = ModelConfig {
        kind: first.clip.kind(),
        frames: first.clip.frames(),
        height: first.clip.height(),
        width: first.clip.width(),
        packets: first.csi.n_pkt(),
        subcarriers: dims.n_sub,
        ..cfg.model.clone()
    };
    model_cfg.validate()?;
    let signals = prepare_signals(samples, &cfg.hampel)?;
    let clips: Vec<VideoClip> = samples.iter().map(|s| s.clip.clone()).collect();
    let (train_idx, test_idx) = split_indices(samples.len(), cfg.train_fraction, cfg.optim.seed);

    fs::create_dir_all(out)?;
    let ck_path = out.join(CHECKPOINT_FILE);
    let log_path = out.join(LOSS_FILE);
    let (mut trainer, start) = if resume {
        let ck = Checkpoint::load(&ck_path)?;
        let (t, done) = Trainer::from_checkpoint(&ck, cfg.optim, cfg.weights)?;
        if *t.model.config() != model_cfg {
            return Err(Error::ShapeMismatch("checkpoint model does not match dataset and config".into()));
        }
        (t, done)
    } else {
        let mut model = Model::init(model_cfg, cfg.optim.init_std, cfg.optim.seed)?;
        model.norm = SignalNorm::fit(train_idx.iter().map(|&i| &signals[i]))?;
        fs::write(&log_path, format!("{LOSS_CSV_HEADER}\n"))?;
        (Trainer::new(model, cfg.optim, cfg.weights)?, 0)
    };

    let mut split = String::new();
    let _ = writeln!(split, "train={}", join(&train_idx));
    let _ = writeln!(split, "test={}", join(&test_idx));
    fs::write(out.join(SPLIT_FILE), split)?;

    let mut history = Vec::new();
    let mut log = fs::read_to_string(&log_path)?;
    let end = start + cfg.optim.epochs;
    for epoch in start..end {
        let records = trainer.run_epoch(epoch, &clips, &signals, &train_idx)?;
        let mean = LossRecord::mean(&records);
        log.push_str(&loss_csv_row(epoch, &mean));
        log.push('\n');
        history.push((epoch, mean));
    }
    fs::write(&log_path, log)?;
    let mut ck = trainer.to_checkpoint(end);
    ck.insert(
        "meta.hampel",
        Tensor::new([2], vec![cfg.hampel.window() as f64, cfg.hampel.n_sigmas()]).expect("two values"),
    );
    ck.save(&ck_path)?;
    Ok(TrainOutcome {
        trainer,
        history,
        train_indices: train_idx,
        test_indices: test_idx,
        checkpoint: ck_path,
    })
}

/// The sanitizer settings a checkpoint was trained with, or the defaults
/// when it does not record them.
pub fn checkpoint_hampel(ck: &Checkpoint) -> Result<HampelConfig> {
    match ck.get("meta.hampel") {
        None => Ok(HampelConfig::default()),
        Some(t) => match *t.data() {
            [w, n] if w >= 0.0 && w.fract() == 0.0 => HampelConfig::new(w as usize, n),
            _ => Err(Error::Parse("malformed hampel block".into())),
        },
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_invariants() {
        assert!(LossWeights::new(0.5, 1.0, 0.5, 1.0).is_ok());
        assert!(LossWeights::new(1.0, 1.0, 0.5, 1.0).is_err());
        assert!(LossWeights::new(0.5, 1.0, 2.0, 1.0).is_err());
        assert!(LossWeights::new(-0.1, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn split_is_reproducible() {
        let (a, b) = split_indices(8, 0.75, 5);
        assert_eq!((a.len(), b.len()), (6, 2));
        assert_eq!(split_indices(8, 0.75, 5), (a, b));
        assert_eq!(split_indices(1, 0.75, 5).0, vec![0]);
    }
}
